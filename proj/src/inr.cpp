#include "echomap/inr.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "echomap/error.hpp"

namespace echomap {

void HashGridConfig::validate() const {
  if (levels < 1) throw ValidationError("hashgrid: levels must be >= 1");
  if (features < 1) throw ValidationError("hashgrid: features must be >= 1");
  if (table_size < 2 || (table_size & (table_size - 1)) != 0)
    throw ValidationError("hashgrid: table_size must be a power of two, got " +
                          std::to_string(table_size));
  if (base_resolution < 1) throw ValidationError("hashgrid: base_resolution must be >= 1");
  if (max_resolution < base_resolution)
    throw ValidationError("hashgrid: max_resolution must be >= base_resolution");
}

double HashGridConfig::growth() const {
  if (levels == 1) return 1.0;
  return std::exp((std::log(static_cast<double>(max_resolution)) -
                   std::log(static_cast<double>(base_resolution))) /
                  (levels - 1));
}

int HashGridConfig::level_resolution(int level) const {
  if (level < 0 || level >= levels)
    throw ValidationError("hashgrid: level " + std::to_string(level) + " out of range");
  if (level == 0) return base_resolution;
  const double n = base_resolution * std::exp(level * std::log(growth()));
  return static_cast<int>(std::floor(n));
}

std::uint32_t hash_index(int vx, int vz, int table_size) {
  const std::uint32_t h =
      static_cast<std::uint32_t>(vx) ^ (static_cast<std::uint32_t>(vz) * 2654435761u);
  return h & static_cast<std::uint32_t>(table_size - 1);
}

InrModel InrModel::init(const HashGridConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  InrModel m;
  m.cfg = cfg;
  Rng rng(seed);
  m.tables.reserve(static_cast<size_t>(cfg.levels));
  for (int l = 0; l < cfg.levels; ++l) {
    Tensor t(cfg.table_size, cfg.features);
    for (double& x : t.v) x = rng.uniform(-1e-4, 1e-4);
    m.tables.push_back(std::move(t));
  }
  const int nin = cfg.levels * cfg.features;
  auto he = [&rng](Tensor& w, int fan_in) {
    const double s = std::sqrt(2.0 / fan_in);
    for (double& x : w.v) x = s * rng.gaussian();
  };
  m.w1 = Tensor(kHidden, nin);
  he(m.w1, nin);
  m.b1 = Tensor(1, kHidden);
  m.w2 = Tensor(kHidden, kHidden);
  he(m.w2, kHidden);
  m.b2 = Tensor(1, kHidden);
  m.w3 = Tensor(1, kHidden);  // zero: fresh field is softplus(0) = ln 2
  m.b3 = Tensor(1, 1);
  return m;
}

std::size_t InrModel::param_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tables) n += static_cast<std::size_t>(t.size());
  for (const Tensor* t : {&w1, &b1, &w2, &b2, &w3, &b3}) n += static_cast<std::size_t>(t->size());
  return n;
}

std::vector<Tensor*> InrModel::params() {
  std::vector<Tensor*> out;
  for (Tensor& t : tables) out.push_back(&t);
  for (Tensor* t : {&w1, &b1, &w2, &b2, &w3, &b3}) out.push_back(t);
  return out;
}

std::vector<const Tensor*> InrModel::params() const {
  std::vector<const Tensor*> out;
  for (const Tensor& t : tables) out.push_back(&t);
  for (const Tensor* t : {&w1, &b1, &w2, &b2, &w3, &b3}) out.push_back(t);
  return out;
}

ModelVars make_leaves(Tape& tape, const InrModel& model, bool requires_grad) {
  ModelVars v;
  for (const Tensor& t : model.tables) {
    v.tables.push_back(tape.leaf(t, requires_grad));
    v.all.push_back(v.tables.back());
  }
  v.w1 = tape.leaf(model.w1, requires_grad);
  v.b1 = tape.leaf(model.b1, requires_grad);
  v.w2 = tape.leaf(model.w2, requires_grad);
  v.b2 = tape.leaf(model.b2, requires_grad);
  v.w3 = tape.leaf(model.w3, requires_grad);
  v.b3 = tape.leaf(model.b3, requires_grad);
  for (Var p : {v.w1, v.b1, v.w2, v.b2, v.w3, v.b3}) v.all.push_back(p);
  return v;
}

Var encode_node(Tape& tape, const ModelVars& vars, const HashGridConfig& cfg,
                std::span<const double> xs, std::span<const double> zs) {
  if (xs.size() != zs.size()) throw ValidationError("encode: coordinate count mismatch");
  const int n = static_cast<int>(xs.size());
  if (n == 0) throw ValidationError("encode: empty batch");
  for (int i = 0; i < n; ++i)
    if (xs[i] < 0.0 || xs[i] > 1.0 || zs[i] < 0.0 || zs[i] > 1.0)
      throw ValidationError("encode: coordinate (" + std::to_string(xs[i]) + ", " +
                            std::to_string(zs[i]) + ") outside [0,1]^2 at point " +
                            std::to_string(i));
  if (static_cast<int>(vars.tables.size()) != cfg.levels)
    throw ValidationError("encode: model has " + std::to_string(vars.tables.size()) +
                          " tables, config wants " + std::to_string(cfg.levels));

  std::vector<Var> level_feats;
  level_feats.reserve(static_cast<size_t>(cfg.levels));
  std::vector<int> i00(n), i10(n), i01(n), i11(n);
  Tensor w00(n, 1), w10(n, 1), w01(n, 1), w11(n, 1);
  for (int l = 0; l < cfg.levels; ++l) {
    const int N = cfg.level_resolution(l);
    for (int i = 0; i < n; ++i) {
      const double px = xs[i] * N;
      const double pz = zs[i] * N;
      int cx = static_cast<int>(px);
      int cz = static_cast<int>(pz);
      if (cx > N - 1) cx = N - 1;
      if (cz > N - 1) cz = N - 1;
      const double fx = px - cx;
      const double fz = pz - cz;
      i00[static_cast<size_t>(i)] = static_cast<int>(hash_index(cx, cz, cfg.table_size));
      i10[static_cast<size_t>(i)] = static_cast<int>(hash_index(cx + 1, cz, cfg.table_size));
      i01[static_cast<size_t>(i)] = static_cast<int>(hash_index(cx, cz + 1, cfg.table_size));
      i11[static_cast<size_t>(i)] = static_cast<int>(hash_index(cx + 1, cz + 1, cfg.table_size));
      w00.v[static_cast<size_t>(i)] = (1.0 - fx) * (1.0 - fz);
      w10.v[static_cast<size_t>(i)] = fx * (1.0 - fz);
      w01.v[static_cast<size_t>(i)] = (1.0 - fx) * fz;
      w11.v[static_cast<size_t>(i)] = fx * fz;
    }
    Var f00 = tape.scale_rows(tape.gather_rows(vars.tables[static_cast<size_t>(l)], i00),
                              tape.constant(w00));
    Var f10 = tape.scale_rows(tape.gather_rows(vars.tables[static_cast<size_t>(l)], i10),
                              tape.constant(w10));
    Var f01 = tape.scale_rows(tape.gather_rows(vars.tables[static_cast<size_t>(l)], i01),
                              tape.constant(w01));
    Var f11 = tape.scale_rows(tape.gather_rows(vars.tables[static_cast<size_t>(l)], i11),
                              tape.constant(w11));
    level_feats.push_back(tape.add(tape.add(f00, f10), tape.add(f01, f11)));
  }
  return tape.concat_cols(level_feats);
}

Var field_node(Tape& tape, const ModelVars& vars, const HashGridConfig& cfg,
               std::span<const double> xs, std::span<const double> zs) {
  Var feat = encode_node(tape, vars, cfg, xs, zs);
  Var h1 = tape.relu(tape.affine(feat, vars.w1, vars.b1));
  Var h2 = tape.relu(tape.affine(h1, vars.w2, vars.b2));
  return tape.softplus(tape.affine(h2, vars.w3, vars.b3));
}

double field_eval(const InrModel& model, double x, double z) {
  Tape tape;
  ModelVars vars = make_leaves(tape, model, false);
  const double xs[1] = {x}, zs[1] = {z};
  Var f = field_node(tape, vars, model.cfg, xs, zs);
  return tape.val(f)[0];
}

void SamplingSpec::validate() const {
  if (rows < 1 || cols < 1) throw ValidationError("sampling: rows and cols must be >= 1");
  if (!(dx_mm > 0.0) || !(dz_mm > 0.0)) throw ValidationError("sampling: spacing must be > 0");
  if (oversample < 1) throw ValidationError("sampling: oversample must be >= 1");
}

Var sample_grid_node(Tape& tape, const ModelVars& vars, const HashGridConfig& cfg,
                     const SamplingSpec& spec, Rng& rng) {
  spec.validate();
  const int fr = spec.fine_rows(), fc = spec.fine_cols();
  std::vector<double> xs(static_cast<size_t>(fr) * fc), zs(static_cast<size_t>(fr) * fc);
  size_t p = 0;
  for (int i = 0; i < fr; ++i)
    for (int j = 0; j < fc; ++j, ++p) {
      const double ox = spec.jitter ? rng.uniform() : 0.5;
      const double oz = spec.jitter ? rng.uniform() : 0.5;
      xs[p] = (j + ox) / fc;
      zs[p] = (i + oz) / fr;
    }
  Var f = field_node(tape, vars, cfg, xs, zs);
  return tape.reshape(f, fr, fc);
}

Image2D sample_grid(const InrModel& model, const SamplingSpec& spec, Rng& rng) {
  Tape tape;
  ModelVars vars = make_leaves(tape, model, false);
  Var f = sample_grid_node(tape, vars, model.cfg, spec, rng);
  Image2D out(spec.fine_rows(), spec.fine_cols(), spec.fine_dx(), spec.fine_dz());
  out.v = tape.val(f);
  return out;
}

// --- checkpoint ----------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'E', 'M', 'I', 'N', 'R', 'C', 'P', '1'};

void write_tensor(std::FILE* f, const Tensor& t) {
  const std::int32_t r = t.rows, c = t.cols;
  std::fwrite(&r, sizeof r, 1, f);
  std::fwrite(&c, sizeof c, 1, f);
  if (!t.v.empty()) std::fwrite(t.v.data(), sizeof(double), t.v.size(), f);
}

Tensor read_tensor(std::FILE* f, const std::string& path) {
  std::int32_t r = 0, c = 0;
  if (std::fread(&r, sizeof r, 1, f) != 1 || std::fread(&c, sizeof c, 1, f) != 1)
    throw ValidationError("checkpoint: truncated tensor header in " + path);
  if (r < 0 || c < 0 || static_cast<long long>(r) * c > (1LL << 31))
    throw ValidationError("checkpoint: implausible tensor shape in " + path);
  Tensor t(r, c);
  if (!t.v.empty() && std::fread(t.v.data(), sizeof(double), t.v.size(), f) != t.v.size())
    throw ValidationError("checkpoint: truncated tensor data in " + path);
  return t;
}
}  // namespace

void save_checkpoint(const InrModel& model, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("checkpoint: cannot open " + path + " for writing");
  std::fwrite(kMagic, 1, sizeof kMagic, f);
  const std::int32_t hdr[5] = {model.cfg.levels, model.cfg.features, model.cfg.table_size,
                               model.cfg.base_resolution, model.cfg.max_resolution};
  std::fwrite(hdr, sizeof(std::int32_t), 5, f);
  for (const Tensor* t : model.params()) write_tensor(f, *t);
  if (std::fclose(f) != 0) throw ValidationError("checkpoint: write to " + path + " failed");
}

InrModel load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ValidationError("checkpoint: cannot open " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    std::fclose(f);
    throw ValidationError("checkpoint: " + path + " is not a model checkpoint (bad magic)");
  }
  std::int32_t hdr[5];
  if (std::fread(hdr, sizeof(std::int32_t), 5, f) != 5) {
    std::fclose(f);
    throw ValidationError("checkpoint: truncated header in " + path);
  }
  InrModel m;
  m.cfg.levels = hdr[0];
  m.cfg.features = hdr[1];
  m.cfg.table_size = hdr[2];
  m.cfg.base_resolution = hdr[3];
  m.cfg.max_resolution = hdr[4];
  try {
    m.cfg.validate();
    for (int l = 0; l < m.cfg.levels; ++l) {
      Tensor t = read_tensor(f, path);
      if (t.rows != m.cfg.table_size || t.cols != m.cfg.features)
        throw ValidationError("checkpoint: table shape mismatch in " + path);
      m.tables.push_back(std::move(t));
    }
    m.w1 = read_tensor(f, path);
    m.b1 = read_tensor(f, path);
    m.w2 = read_tensor(f, path);
    m.b2 = read_tensor(f, path);
    m.w3 = read_tensor(f, path);
    m.b3 = read_tensor(f, path);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  const int nin = m.cfg.levels * m.cfg.features;
  if (m.w1.rows != InrModel::kHidden || m.w1.cols != nin || m.w2.rows != InrModel::kHidden ||
      m.w3.cols != InrModel::kHidden || m.b3.size() != 1)
    throw ValidationError("checkpoint: MLP shape mismatch in " + path);
  return m;
}

}  // namespace echomap
