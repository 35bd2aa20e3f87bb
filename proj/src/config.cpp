#include "rnst/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rnst/errors.hpp"

namespace rnst::config {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as typos.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned()) {
            out = v.get<T>();
          } else if (v.get<long long>() >= 0) {
            out = static_cast<T>(v.get<long long>());
          } else {
            throw ConfigError("");
          }
        } else {
          out = v.get<T>();
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      } else {
        static_assert(sizeof(T) == 0, "unsupported config field type");
      }
    } catch (const ConfigError&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  std::string where(const std::string& key = "") const {
    std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return p.empty() ? "config" : "'" + p + "'";
  }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto rethrow_as_config(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json source_json(const SliceSource& s) {
  return {{"path", s.path.string()}, {"label", s.label}};
}

SliceSource read_source(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  SliceSource s;
  r.get("path", s.path);
  r.get("label", s.label);
  r.finish();
  if (s.path.empty()) throw ConfigError(r.where("path") + " is required");
  return s;
}

void read_optional_source(ObjectReader& r, const std::string& key,
                          std::optional<SliceSource>& out) {
  if (!r.has(key)) return;
  const json& v = r.raw(key);
  if (v.is_null()) {
    out.reset();
  } else {
    out = read_source(v, r.child(key));
  }
}

json selection_json(const features::LayerSelection& s) {
  return {{"style_layers", s.style_layers},
          {"content_layers", s.content_layers},
          {"layer_weights", s.layer_weights}};
}

template <typename T>
std::vector<T> read_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError("'" + where + "' must be an array");
  std::vector<T> out;
  for (const json& e : v) {
    if constexpr (std::is_same_v<T, double>) {
      if (!e.is_number()) throw ConfigError("'" + where + "' must hold numbers");
    } else {
      if (!e.is_string()) throw ConfigError("'" + where + "' must hold strings");
    }
    out.push_back(e.get<T>());
  }
  return out;
}

void read_selection(const json& j, const std::string& path, features::LayerSelection& s) {
  ObjectReader r(j, path);
  if (r.has("style_layers"))
    s.style_layers = read_array<std::string>(r.raw("style_layers"), r.child("style_layers"));
  if (r.has("content_layers"))
    s.content_layers = read_array<std::string>(r.raw("content_layers"), r.child("content_layers"));
  if (r.has("layer_weights"))
    s.layer_weights = read_array<double>(r.raw("layer_weights"), r.child("layer_weights"));
  r.finish();
}

json nst_json(const nst::NSTConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"selection", selection_json(c.selection)},
          {"norm_mode", nst::to_string(c.norm_mode)},
          {"inner_step_size", c.inner_step_size},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
}

void read_nst(const json& j, const std::string& path, nst::NSTConfig& c) {
  ObjectReader r(j, path);
  r.get("alpha", c.alpha);
  r.get("beta", c.beta);
  if (r.has("selection")) read_selection(r.raw("selection"), r.child("selection"), c.selection);
  if (r.has("norm_mode")) {
    std::string s;
    r.get("norm_mode", s);
    c.norm_mode = rethrow_as_config(r.where("norm_mode"), [&] { return nst::norm_mode_from_string(s); });
  }
  r.get("inner_step_size", c.inner_step_size);
  if (r.has("adam")) {
    ObjectReader a(r.raw("adam"), r.child("adam"));
    a.get("beta1", c.adam.beta1);
    a.get("beta2", c.adam.beta2);
    a.get("epsilon", c.adam.epsilon);
    a.finish();
  }
  r.finish();
}

json denoiser_json(const denoise::DenoiserSpec& d) {
  return {{"kind", denoise::to_string(d.kind)},
          {"gaussian", {{"sigma_blur", d.gaussian.sigma_blur}}},
          {"nlm",
           {{"patch_size", d.nlm.patch_size},
            {"search_window", d.nlm.search_window},
            {"filtering_h", d.nlm.filtering_h},
            {"noise_sigma", d.nlm.noise_sigma}}},
          {"external",
           {{"program", d.external.program},
            {"args", d.external.args},
            {"reentrant", d.external.reentrant}}}};
}

void read_denoiser(const json& j, const std::string& path, denoise::DenoiserSpec& d) {
  ObjectReader r(j, path);
  if (r.has("kind")) {
    std::string s;
    r.get("kind", s);
    d.kind = rethrow_as_config(r.where("kind"), [&] { return denoise::denoiser_kind_from_string(s); });
  }
  if (r.has("gaussian")) {
    ObjectReader g(r.raw("gaussian"), r.child("gaussian"));
    g.get("sigma_blur", d.gaussian.sigma_blur);
    g.finish();
  }
  if (r.has("nlm")) {
    ObjectReader n(r.raw("nlm"), r.child("nlm"));
    n.get("patch_size", d.nlm.patch_size);
    n.get("search_window", d.nlm.search_window);
    n.get("filtering_h", d.nlm.filtering_h);
    n.get("noise_sigma", d.nlm.noise_sigma);
    n.finish();
  }
  if (r.has("external")) {
    ObjectReader e(r.raw("external"), r.child("external"));
    e.get("program", d.external.program);
    if (e.has("args")) d.external.args = read_array<std::string>(e.raw("args"), e.child("args"));
    e.get("reentrant", d.external.reentrant);
    e.finish();
  }
  r.finish();
}

json rnst_json(const RNSTConfig& c) {
  return {{"lambda", c.lambda},
          {"mu", c.mu},
          {"n_iter", c.n_iter},
          {"n_style", c.n_style},
          {"n_line", c.n_line},
          {"n0", c.n0},
          {"n_step", c.n_step},
          {"step_rule", "fixed_multiples"},
          {"nst", nst_json(c.nst)},
          {"denoiser", denoiser_json(c.denoiser)}};
}

void read_rnst(const json& j, const std::string& path, RNSTConfig& c) {
  ObjectReader r(j, path);
  r.get("lambda", c.lambda);
  r.get("mu", c.mu);
  r.get("n_iter", c.n_iter);
  r.get("n_style", c.n_style);
  r.get("n_line", c.n_line);
  r.get("n0", c.n0);
  r.get("n_step", c.n_step);
  if (r.has("step_rule")) {
    std::string s;
    r.get("step_rule", s);
    if (s != "fixed_multiples") throw ConfigError(r.where("step_rule") + ": unsupported rule '" + s + "'");
    c.step_rule = StepRule::fixed_multiples;
  }
  if (r.has("nst")) read_nst(r.raw("nst"), r.child("nst"), c.nst);
  if (r.has("denoiser")) read_denoiser(r.raw("denoiser"), r.child("denoiser"), c.denoiser);
  r.finish();
}

}  // namespace

void RunConfig::validate() const {
  const int sources = (phantom ? 1 : 0) + (content ? 1 : 0);
  if (sources != 1) throw ConfigError("exactly one of 'phantom' and 'content' must be set");
  if (content && !guidance) throw ConfigError("'guidance' is required when 'content' is set");
  if (phantom) {
    if (guidance) throw ConfigError("'guidance' must be absent in phantom mode");
    if (reference) throw ConfigError("'reference' must be absent in phantom mode");
    if (phantom->size < 64) throw ConfigError("'phantom.size' must be >= 64");
    if (!(phantom->contrast_gamma > 0.0)) throw ConfigError("'phantom.contrast_gamma' must be > 0");
    if (!(phantom->noise_sigma >= 0.0 && phantom->noise_sigma < 1.0))
      throw ConfigError("'phantom.noise_sigma' must lie in [0, 1)");
    if (phantom->slices < 1) throw ConfigError("'phantom.slices' must be >= 1");
    if (phantom->first_index < 0) throw ConfigError("'phantom.first_index' must be >= 0");
  }
  if (policy.mode == dataio::GuidanceMode::frozen && !policy.frozen_index)
    throw ConfigError("'policy.frozen_index' is required in frozen mode");
  if (policy.mode == dataio::GuidanceMode::matched && policy.frozen_index)
    throw ConfigError("'policy.frozen_index' is only valid in frozen mode");
  if (noise) rethrow_as_config("'noise'", [&] { noise->validate(); });
  if (workers < 1) throw ConfigError("'workers' must be >= 1");
  if (output_dir.empty()) throw ConfigError("'output_dir' must not be empty");
  if (!backbone.sha256.empty()) {
    bool ok = backbone.sha256.size() == 64;
    for (char ch : backbone.sha256) ok = ok && ((ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f'));
    if (!ok) throw ConfigError("'backbone.sha256' must be 64 lower-case hex digits");
  }
  rethrow_as_config("'rnst'", [&] { (void)rnst.validate(); });
}

std::uint64_t phantom_noise_seed(std::uint64_t run_seed, int index) {
  // splitmix64 finaliser over (seed, index).
  std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"paper-test1", "paper-test2-awgn",
                                                 "phantom-default"};
  return names;
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  cfg.phantom = PhantomSource{};
  cfg.rnst.n_style = 3;
  cfg.rnst.n_line = 5;
  cfg.rnst.n0 = 100;
  cfg.rnst.n_step = 100;
  cfg.rnst.nst.alpha = 1e-6;
  cfg.rnst.nst.beta = 1.0;
  if (name == "paper-test1") {
    cfg.rnst.mu = 0.13;
    cfg.rnst.lambda = 0.2;
    cfg.rnst.n_iter = 10;
  } else if (name == "paper-test2-awgn") {
    cfg.rnst.mu = 0.15;
    cfg.rnst.lambda = 0.3;
    cfg.rnst.n_iter = 50;
    // The added corruption replaces the phantom's own noise.
    cfg.phantom->noise_sigma = 0.0;
    cfg.noise = NoiseSpec{20.0 / 255.0, 0};
  } else if (name == "phantom-default") {
    cfg.rnst.mu = 0.13;
    cfg.rnst.lambda = 0.2;
    cfg.rnst.n_iter = 10;
    cfg.rnst.n0 = 50;
    cfg.rnst.n_step = 50;
    cfg.phantom->size = 128;
    cfg.phantom->contrast_gamma = 1.4;
    cfg.phantom->noise_sigma = 20.0 / 255.0;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return cfg;
}

std::string to_json(const RunConfig& cfg) {
  json j;
  j["schema_version"] = kSchemaVersion;
  if (cfg.phantom) {
    j["phantom"] = {{"size", cfg.phantom->size},
                    {"contrast_gamma", cfg.phantom->contrast_gamma},
                    {"noise_sigma", cfg.phantom->noise_sigma},
                    {"slices", cfg.phantom->slices},
                    {"first_index", cfg.phantom->first_index}};
  } else {
    j["phantom"] = nullptr;
  }
  j["content"] = cfg.content ? source_json(*cfg.content) : json(nullptr);
  j["guidance"] = cfg.guidance ? source_json(*cfg.guidance) : json(nullptr);
  j["reference"] = cfg.reference ? source_json(*cfg.reference) : json(nullptr);
  j["policy"] = {{"mode", dataio::to_string(cfg.policy.mode)},
                 {"frozen_index", cfg.policy.frozen_index ? json(*cfg.policy.frozen_index) : json(nullptr)}};
  j["rnst"] = rnst_json(cfg.rnst);
  j["noise"] = cfg.noise ? json{{"sigma", cfg.noise->sigma}, {"seed", cfg.noise->seed}} : json(nullptr);
  j["backbone"] = {{"path", cfg.backbone.path.string()},
                   {"sha256", cfg.backbone.sha256},
                   {"precision", features::to_string(cfg.backbone.options.precision)},
                   {"tap", features::to_string(cfg.backbone.options.tap)},
                   {"normalization", features::to_string(cfg.backbone.options.normalization)}};
  j["output_dir"] = cfg.output_dir.string();
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["error_maps"] = cfg.error_maps;
  return j.dump(2) + "\n";
}

RunConfig from_json(const std::string& text, const std::string& default_preset) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ObjectReader r(j, "");
  if (!r.has("schema_version")) throw ConfigError("'schema_version' is required");
  int version = 0;
  r.get("schema_version", version);
  if (version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");

  RunConfig cfg = default_preset.empty() ? RunConfig{} : preset(default_preset);
  if (r.has("preset")) {
    std::string name;
    r.get("preset", name);
    cfg = preset(name);
  }

  if (r.has("phantom")) {
    const json& v = r.raw("phantom");
    if (v.is_null()) {
      cfg.phantom.reset();
    } else {
      ObjectReader p(v, "phantom");
      PhantomSource ps = cfg.phantom.value_or(PhantomSource{});
      p.get("size", ps.size);
      p.get("contrast_gamma", ps.contrast_gamma);
      p.get("noise_sigma", ps.noise_sigma);
      p.get("slices", ps.slices);
      p.get("first_index", ps.first_index);
      p.finish();
      cfg.phantom = ps;
    }
  }
  read_optional_source(r, "content", cfg.content);
  // A file-based config implies leaving phantom mode unless it says otherwise.
  if (cfg.content && !r.has("phantom")) cfg.phantom.reset();
  read_optional_source(r, "guidance", cfg.guidance);
  read_optional_source(r, "reference", cfg.reference);

  if (r.has("policy")) {
    ObjectReader p(r.raw("policy"), "policy");
    if (p.has("mode")) {
      std::string s;
      p.get("mode", s);
      cfg.policy.mode =
          rethrow_as_config(p.where("mode"), [&] { return dataio::guidance_mode_from_string(s); });
    }
    if (p.has("frozen_index")) {
      const json& v = p.raw("frozen_index");
      if (v.is_null()) {
        cfg.policy.frozen_index.reset();
      } else if (v.is_number_integer()) {
        cfg.policy.frozen_index = v.get<int>();
      } else {
        throw ConfigError(p.where("frozen_index") + " has the wrong type");
      }
    }
    p.finish();
  }
  if (r.has("rnst")) read_rnst(r.raw("rnst"), "rnst", cfg.rnst);
  if (r.has("noise")) {
    const json& v = r.raw("noise");
    if (v.is_null()) {
      cfg.noise.reset();
    } else {
      ObjectReader n(v, "noise");
      NoiseSpec ns = cfg.noise.value_or(NoiseSpec{});
      n.get("sigma", ns.sigma);
      n.get("seed", ns.seed);
      n.finish();
      cfg.noise = ns;
    }
  }
  if (r.has("backbone")) {
    ObjectReader w(r.raw("backbone"), "backbone");
    auto& opts = cfg.backbone.options;
    w.get("path", cfg.backbone.path);
    w.get("sha256", cfg.backbone.sha256);
    std::string s;
    if (w.has("precision")) {
      w.get("precision", s);
      opts.precision = rethrow_as_config(w.where("precision"), [&] { return features::precision_from_string(s); });
    }
    if (w.has("tap")) {
      w.get("tap", s);
      opts.tap = rethrow_as_config(w.where("tap"), [&] { return features::feature_tap_from_string(s); });
    }
    if (w.has("normalization")) {
      w.get("normalization", s);
      opts.normalization = rethrow_as_config(
          w.where("normalization"), [&] { return features::input_normalization_from_string(s); });
    }
    w.finish();
  }
  r.get("output_dir", cfg.output_dir);
  r.get("seed", cfg.seed);
  r.get("workers", cfg.workers);
  r.get("error_maps", cfg.error_maps);
  r.finish();

  cfg.validate();
  return cfg;
}

RunConfig load(const std::filesystem::path& path, const std::string& default_preset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(ss.str(), default_preset);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json(cfg);
  if (!out) throw ConfigError("failed writing config " + path.string());
}

std::filesystem::path weights_cache_dir() {
  if (const char* d = std::getenv("RNST_WEIGHTS_DIR"); d && *d) return d;
  if (const char* x = std::getenv("XDG_CACHE_HOME"); x && *x) return std::filesystem::path(x) / "rnst";
  if (const char* h = std::getenv("HOME"); h && *h) return std::filesystem::path(h) / ".cache" / "rnst";
  return std::filesystem::path(".rnst-cache");
}

std::filesystem::path resolve_weights_path(const BackboneRef& ref) {
  if (!ref.path.empty()) return ref.path;
  return weights_cache_dir() / kWeightsFileName;
}

}  // namespace rnst::config
