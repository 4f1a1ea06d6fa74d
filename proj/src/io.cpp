#include "echomap/io.hpp"

#include <bit>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "echomap/error.hpp"

namespace echomap {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

void put_f32_le(std::string& out, float f) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write to " + path + " failed");
}

// next whitespace-delimited token of a PNM-style header; '#' starts a comment
std::string next_token(const std::string& s, size_t& pos, const std::string& path) {
  while (pos < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (start == pos) throw ValidationError(path + ": truncated header");
  return s.substr(start, pos - start);
}

}  // namespace

double parse_double(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
    throw ValidationError(where + ": '" + text + "' is not a number");
  return v;
}

int parse_int(const std::string& text, const std::string& where) {
  const double v = parse_double(text, where);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ValidationError(where + ": '" + text + "' is not an integer");
  return i;
}

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (t.empty() || t[0] == '-' || end != t.c_str() + t.size() || errno == ERANGE)
    throw ValidationError(where + ": '" + text + "' is not a valid seed");
  return v;
}

void write_pfm(const std::string& path, const Image2D& img) {
  if (img.rows < 1 || img.cols < 1) throw ValidationError("pfm: empty image");
  std::string out;
  char header[64];
  std::snprintf(header, sizeof header, "Pf\n%d %d\n-1.0\n", img.cols, img.rows);
  out += header;
  out.reserve(out.size() + img.v.size() * 4);
  // bottom-up row order per the PFM convention
  for (int i = img.rows - 1; i >= 0; --i)
    for (int j = 0; j < img.cols; ++j)
      put_f32_le(out, static_cast<float>(img.v[static_cast<size_t>(i) * img.cols + j]));
  write_file(path, out);
}

namespace {

// dx/dz from "<path>.meta"; returns false if the sidecar does not exist
bool read_sidecar_spacing(const std::string& image_path, double& dx, double& dz) {
  const std::string meta = image_path + ".meta";
  std::ifstream in(meta);
  if (!in) return false;
  std::string line;
  bool got_dx = false, got_dz = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError(meta + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "dx_mm") {
      dx = parse_double(value, meta + ":" + std::to_string(lineno));
      got_dx = true;
    } else if (key == "dz_mm") {
      dz = parse_double(value, meta + ":" + std::to_string(lineno));
      got_dz = true;
    }
    // other sidecar keys (seed, counts, provenance) are informational
  }
  if (!got_dx || !got_dz)
    throw ValidationError(meta + ": missing dx_mm/dz_mm");
  return true;
}

}  // namespace

Image2D read_pfm(const std::string& path, double dx_mm, double dz_mm) {
  const std::string s = read_file(path);
  size_t pos = 0;
  const std::string magic = next_token(s, pos, path);
  if (magic == "PF") throw ValidationError(path + ": color PFM not supported (want grayscale Pf)");
  if (magic != "Pf") throw ValidationError(path + ": not a PFM file (magic '" + magic + "')");
  const int W = parse_int(next_token(s, pos, path), path + ": width");
  const int H = parse_int(next_token(s, pos, path), path + ": height");
  if (W < 1 || H < 1) throw ValidationError(path + ": bad dimensions");
  const double scale = parse_double(next_token(s, pos, path), path + ": scale");
  if (scale >= 0.0) throw ValidationError(path + ": big-endian PFM not supported");
  if (pos >= s.size() || (s[pos] != '\n' && s[pos] != '\r' && s[pos] != ' '))
    throw ValidationError(path + ": malformed header");
  ++pos;  // single whitespace byte separates header from samples
  const size_t need = static_cast<size_t>(W) * H * 4;
  if (s.size() - pos < need)
    throw ValidationError(path + ": truncated pixel data (" +
                          std::to_string(s.size() - pos) + " of " + std::to_string(need) +
                          " bytes)");

  if (dx_mm <= 0.0 || dz_mm <= 0.0) {
    if (!read_sidecar_spacing(path, dx_mm, dz_mm))
      throw ValidationError(path + ": no pixel spacing: missing sidecar " + path +
                            ".meta (or pass --dx/--dz)");
  }
  Image2D img(H, W, dx_mm, dz_mm);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(s.data()) + pos;
  for (int i = H - 1; i >= 0; --i)
    for (int j = 0; j < W; ++j, p += 4)
      img.v[static_cast<size_t>(i) * W + j] = static_cast<double>(get_f32_le(p));
  return img;
}

void write_meta(const std::string& image_path, const Image2D& img,
                const std::vector<std::pair<std::string, std::string>>& extra) {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "dx_mm = %.17g\n", img.dx_mm);
  out += buf;
  std::snprintf(buf, sizeof buf, "dz_mm = %.17g\n", img.dz_mm);
  out += buf;
  for (const auto& [k, v] : extra) out += k + " = " + v + "\n";
  write_file(image_path + ".meta", out);
}

Image2D read_pgm(const std::string& path, double dx_mm, double dz_mm) {
  if (!(dx_mm > 0.0) || !(dz_mm > 0.0))
    throw ValidationError(path + ": PGM ingest needs positive pixel spacing");
  const std::string s = read_file(path);
  size_t pos = 0;
  const std::string magic = next_token(s, pos, path);
  if (magic != "P5")
    throw ValidationError(path + ": not a binary PGM (magic '" + magic + "')");
  const int W = parse_int(next_token(s, pos, path), path + ": width");
  const int H = parse_int(next_token(s, pos, path), path + ": height");
  const int maxval = parse_int(next_token(s, pos, path), path + ": maxval");
  if (W < 1 || H < 1) throw ValidationError(path + ": bad dimensions");
  if (maxval < 1 || maxval > 255)
    throw ValidationError(path + ": only 8-bit PGM supported (maxval " +
                          std::to_string(maxval) + ")");
  ++pos;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(W) * H;
  if (pos > s.size() || s.size() - pos < need)
    throw ValidationError(path + ": truncated pixel data");
  Image2D img(H, W, dx_mm, dz_mm);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(s.data()) + pos;
  for (size_t i = 0; i < need; ++i)
    img.v[i] = static_cast<double>(p[i]) / maxval;
  return img;
}

void write_pgm(const std::string& path, const Image2D& img) {
  if (img.rows < 1 || img.cols < 1) throw ValidationError("pgm: empty image");
  std::string out;
  char header[64];
  std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", img.cols, img.rows);
  out += header;
  out.reserve(out.size() + img.v.size());
  for (double v : img.v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    out.push_back(static_cast<char>(static_cast<int>(std::lround(c * 255.0))));
  }
  write_file(path, out);
}

std::vector<IniSection> parse_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<IniSection> sections;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string at = path + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ValidationError(at + ": malformed section header '" + t + "'");
      sections.push_back({trim(t.substr(1, t.size() - 2)), lineno, {}});
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError(at + ": expected 'key = value', got '" + t + "'");
    if (sections.empty())
      throw ValidationError(at + ": key outside any [section]");
    IniEntry e{trim(t.substr(0, eq)), trim(t.substr(eq + 1)), lineno};
    if (e.key.empty()) throw ValidationError(at + ": empty key");
    sections.back().entries.push_back(std::move(e));
  }
  return sections;
}

PhantomSpec load_phantom_spec(const std::string& path) {
  PhantomSpec spec;
  bool saw_phantom = false;
  for (const IniSection& sec : parse_ini(path)) {
    const std::string sec_at = path + ":" + std::to_string(sec.line);
    if (sec.name == "phantom") {
      if (saw_phantom) throw ValidationError(sec_at + ": duplicate [phantom] section");
      saw_phantom = true;
      for (const IniEntry& e : sec.entries) {
        const std::string at = path + ":" + std::to_string(e.line);
        if (e.key == "width_mm")
          spec.width_mm = parse_double(e.value, at);
        else if (e.key == "depth_mm")
          spec.depth_mm = parse_double(e.value, at);
        else if (e.key == "dx_mm")
          spec.dx_mm = parse_double(e.value, at);
        else if (e.key == "dz_mm")
          spec.dz_mm = parse_double(e.value, at);
        else if (e.key == "background_mean")
          spec.background_mean = parse_double(e.value, at);
        else if (e.key == "seed")
          spec.seed = parse_seed(e.value, at);
        else
          throw ValidationError(at + ": unknown key '" + e.key + "' in [phantom]");
      }
    } else if (sec.name == "inclusion") {
      Inclusion inc;
      for (const IniEntry& e : sec.entries) {
        const std::string at = path + ":" + std::to_string(e.line);
        if (e.key == "x_mm")
          inc.x_mm = parse_double(e.value, at);
        else if (e.key == "z_mm")
          inc.z_mm = parse_double(e.value, at);
        else if (e.key == "radius_mm")
          inc.radius_mm = parse_double(e.value, at);
        else if (e.key == "contrast_db")
          inc.contrast_db = parse_double(e.value, at);
        else
          throw ValidationError(at + ": unknown key '" + e.key + "' in [inclusion]");
      }
      spec.inclusions.push_back(inc);
    } else if (sec.name == "wire") {
      Wire w;
      for (const IniEntry& e : sec.entries) {
        const std::string at = path + ":" + std::to_string(e.line);
        if (e.key == "x_mm")
          w.x_mm = parse_double(e.value, at);
        else if (e.key == "z_mm")
          w.z_mm = parse_double(e.value, at);
        else if (e.key == "radius_mm")
          w.radius_mm = parse_double(e.value, at);
        else if (e.key == "amplitude_db")
          w.amplitude_db = parse_double(e.value, at);
        else
          throw ValidationError(at + ": unknown key '" + e.key + "' in [wire]");
      }
      spec.wires.push_back(w);
    } else {
      throw ValidationError(sec_at + ": unknown section [" + sec.name + "]");
    }
  }
  if (!saw_phantom) throw ValidationError(path + ": missing [phantom] section");
  spec.validate();
  return spec;
}

PsfParams load_psf_params(const std::string& path) {
  PsfParams p;
  bool saw = false;
  for (const IniSection& sec : parse_ini(path)) {
    const std::string sec_at = path + ":" + std::to_string(sec.line);
    if (sec.name != "psf") throw ValidationError(sec_at + ": unknown section [" + sec.name + "]");
    if (saw) throw ValidationError(sec_at + ": duplicate [psf] section");
    saw = true;
    for (const IniEntry& e : sec.entries) {
      const std::string at = path + ":" + std::to_string(e.line);
      if (e.key == "center_frequency_mhz")
        p.f_c_mhz = parse_double(e.value, at);
      else if (e.key == "speed_of_sound_mm_us")
        p.sos_mm_us = parse_double(e.value, at);
      else if (e.key == "focal_depth_mm")
        p.focal_mm = parse_double(e.value, at);
      else if (e.key == "f_number")
        p.f_number = parse_double(e.value, at);
      else if (e.key == "n_cycles")
        p.n_cycles = parse_int(e.value, at);
      else
        throw ValidationError(at + ": unknown key '" + e.key + "' in [psf]");
    }
  }
  if (!saw) throw ValidationError(path + ": missing [psf] section");
  p.validate();
  return p;
}

void save_psf_params(const std::string& path, const PsfParams& p) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "[psf]\n"
                "center_frequency_mhz = %.17g\n"
                "speed_of_sound_mm_us = %.17g\n"
                "focal_depth_mm = %.17g\n"
                "f_number = %.17g\n"
                "n_cycles = %d\n",
                p.f_c_mhz, p.sos_mm_us, p.focal_mm, p.f_number, p.n_cycles);
  write_file(path, buf);
}

}  // namespace echomap
