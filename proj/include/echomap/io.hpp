#pragma once

#include <string>
#include <utility>
#include <vector>

#include "echomap/image.hpp"
#include "echomap/phantom.hpp"
#include "echomap/psf.hpp"

namespace echomap {

// Grayscale PFM ("Pf"), little-endian (negative scale), bottom-up rows,
// float32 samples. Pixel spacing travels in a "<path>.meta" sidecar.
void write_pfm(const std::string& path, const Image2D& img);

// dx_mm/dz_mm <= 0 means "take spacing from the sidecar".
Image2D read_pfm(const std::string& path, double dx_mm = 0.0, double dz_mm = 0.0);

// key = value sidecar lines; extra entries appended verbatim
void write_meta(const std::string& image_path, const Image2D& img,
                const std::vector<std::pair<std::string, std::string>>& extra = {});

// 8-bit binary PGM: ingest maps [0,255] -> [0,1] with caller-supplied
// spacing; write clamps [0,1] -> [0,255] (preview only).
Image2D read_pgm(const std::string& path, double dx_mm, double dz_mm);
void write_pgm(const std::string& path, const Image2D& img);

// INI-style config: [section] headers, key = value pairs, '#' comments.
// Parsers are fail-closed: unknown sections/keys are errors citing the line.
struct IniEntry {
  std::string key, value;
  int line = 0;
};
struct IniSection {
  std::string name;
  int line = 0;
  std::vector<IniEntry> entries;
};
std::vector<IniSection> parse_ini(const std::string& path);

double parse_double(const std::string& text, const std::string& where);
int parse_int(const std::string& text, const std::string& where);
std::uint64_t parse_seed(const std::string& text, const std::string& where);

PhantomSpec load_phantom_spec(const std::string& path);

PsfParams load_psf_params(const std::string& path);
void save_psf_params(const std::string& path, const PsfParams& p);

}  // namespace echomap
