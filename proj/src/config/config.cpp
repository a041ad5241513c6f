#include "openvision/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "openvision/error.hpp"
#include "openvision/model.hpp"
#include "openvision/params.hpp"
#include "openvision/probe.hpp"
#include "openvision/shard.hpp"

namespace openvision {

std::map<std::string, std::string> parse_flat_ini(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::config, std::string("malformed config: ") + e.what());
  }
  std::map<std::string, std::string> out;
  for (const auto& [section, body] : tree) {
    require(!body.empty(), ErrorKind::config,
            "config key '" + section + "' is outside any [section]");
    for (const auto& [key, value] : body) {
      out[section + "." + key] = value.data();
    }
  }
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename I>
I parse_int(const std::string& s) {
  I v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(), ErrorKind::config,
          "'" + s + "' is not an integer");
  return v;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(), ErrorKind::config,
          "'" + s + "' is not a number");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    return false;
  }
  fail(ErrorKind::config, "'" + s + "' is not a boolean");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& part : out) {
    const auto b = part.find_first_not_of(" \t");
    const auto e = part.find_last_not_of(" \t");
    part = b == std::string::npos ? std::string() : part.substr(b, e - b + 1);
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out += (i ? sep : "") + parts[i];
  }
  return out;
}

// Setters keyed by "section.key" for sections without an index.
using Setter = std::function<void(RunConfig&, const std::string&)>;

#define OV_INT(field) [](RunConfig& c, const std::string& v) { c.field = parse_int<decltype(c.field)>(v); }
#define OV_DBL(field) [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }
#define OV_BOOL(field) [](RunConfig& c, const std::string& v) { c.field = parse_bool(v); }
#define OV_STR(field) [](RunConfig& c, const std::string& v) { c.field = v; }

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"run.name", OV_STR(name)},
      {"run.seed", OV_INT(seed)},
      {"run.output_dir", OV_STR(output_dir)},
      {"run.strict", OV_BOOL(strict)},
      {"run.workers", OV_INT(workers)},
      {"run.max_steps", OV_INT(max_steps)},

      {"vision.layers", OV_INT(model.vision.layers)},
      {"vision.width", OV_INT(model.vision.width)},
      {"vision.heads", OV_INT(model.vision.heads)},
      {"vision.mlp_dim", OV_INT(model.vision.mlp_dim)},
      {"vision.patch", OV_INT(model.vision.patch)},
      {"vision.resolution", OV_INT(model.vision.resolution)},
      {"vision.pool", [](RunConfig& c, const std::string& v) { c.model.vision.pool = parse_pool(v); }},

      {"text.encoder_context", OV_INT(model.text.encoder_context)},
      {"text.decoder_context", OV_INT(model.text.decoder_context)},
      {"text.tokenizer", OV_STR(model.text.tokenizer)},
      {"text.layers", OV_INT(model.text.layers)},
      {"text.width", OV_INT(model.text.width)},
      {"text.heads", OV_INT(model.text.heads)},
      {"text.mlp_dim", OV_INT(model.text.mlp_dim)},
      {"text.decoder_layers", OV_INT(model.text.decoder_layers)},

      {"loss.use_decoder", OV_BOOL(loss.use_decoder)},
      {"loss.caption_source",
       [](RunConfig& c, const std::string& v) { c.loss.caption_source = parse_caption_source(v); }},
      {"loss.lambda_caption", OV_DBL(loss.lambda_caption)},

      {"optim.beta1", OV_DBL(optim.beta1)},
      {"optim.beta2", OV_DBL(optim.beta2)},
      {"optim.eps", OV_DBL(optim.eps)},
      {"optim.weight_decay", OV_DBL(optim.weight_decay)},
      {"optim.clip_norm", OV_DBL(optim.clip_norm)},
      {"optim.warmup_fraction", OV_DBL(warmup_fraction)},

      {"data.train", OV_STR(data.train)},
      {"data.eval", OV_STR(data.eval)},
      {"data.generate_n", OV_INT(data.generate_n)},
      {"data.generate_seed", OV_INT(data.generate_seed)},
      {"data.generate_resolution", OV_INT(data.generate_resolution)},
      {"data.stratified", OV_BOOL(data.stratified)},
      {"data.flip", OV_BOOL(data.flip)},
      {"data.cache_images", OV_INT(data.cache_images)},

      {"finetune.mode",
       [](RunConfig& c, const std::string& v) { c.finetune.mode = parse_tune_mode(v); }},
      {"finetune.vision_multiplier", OV_DBL(finetune.multipliers.vision)},
      {"finetune.projector_multiplier", OV_DBL(finetune.multipliers.projector)},
      {"finetune.lm_multiplier", OV_DBL(finetune.multipliers.lm)},
      {"finetune.vision_checkpoint", OV_STR(finetune.vision_checkpoint)},
      {"finetune.lm_checkpoint", OV_STR(finetune.lm_checkpoint)},
      {"finetune.projector_hidden", OV_INT(finetune.projector_hidden)},
      {"finetune.projector_activation",
       [](RunConfig& c, const std::string& v) {
         c.finetune.projector_activation = parse_activation(v);
       }},
      {"finetune.anyres", OV_BOOL(finetune.anyres)},
      {"finetune.max_tiles", OV_INT(finetune.max_tiles)},
      {"finetune.resolution", OV_INT(finetune.resolution)},

      {"lm.layers", OV_INT(finetune.lm.layers)},
      {"lm.width", OV_INT(finetune.lm.width)},
      {"lm.heads", OV_INT(finetune.lm.heads)},
      {"lm.mlp_dim", OV_INT(finetune.lm.mlp_dim)},
      {"lm.context", OV_INT(finetune.lm.context)},
      {"lm.tokenizer", OV_STR(finetune.lm.tokenizer)},

      {"eval.checkpoint", OV_STR(eval.checkpoint)},
      {"eval.templates",
       [](RunConfig& c, const std::string& v) { c.eval.templates = split(v, '|'); }},
      {"eval.ks",
       [](RunConfig& c, const std::string& v) {
         c.eval.ks.clear();
         if (v.empty()) {
           return;
         }
         for (const auto& part : split(v, ',')) {
           c.eval.ks.push_back(parse_int<int>(part));
         }
       }},
      {"eval.dataset_id", OV_STR(eval.dataset_id)},
  };
  return table;
}

#undef OV_INT
#undef OV_DBL
#undef OV_BOOL
#undef OV_STR

using StageSetter = std::function<void(StageSchedule&, const std::string&)>;
const std::map<std::string, StageSetter, std::less<>> kStageKeys = {
    {"resolution", [](StageSchedule& s, const std::string& v) { s.resolution = parse_int<int>(v); }},
    {"samples", [](StageSchedule& s, const std::string& v) { s.samples = parse_int<std::int64_t>(v); }},
    {"batch", [](StageSchedule& s, const std::string& v) { s.batch = parse_int<int>(v); }},
    {"lr", [](StageSchedule& s, const std::string& v) { s.base_lr = parse_double(v); }},
    {"warmup", [](StageSchedule& s, const std::string& v) { s.warmup_samples = parse_int<std::int64_t>(v); }},
};

using FtSetter = std::function<void(FinetuneStage&, const std::string&)>;
const std::map<std::string, FtSetter, std::less<>> kFtStageKeys = {
    {"name", [](FinetuneStage& s, const std::string& v) { s.name = v; }},
    {"steps", [](FinetuneStage& s, const std::string& v) { s.steps = parse_int<std::int64_t>(v); }},
    {"batch", [](FinetuneStage& s, const std::string& v) { s.batch = parse_int<int>(v); }},
    {"lr", [](FinetuneStage& s, const std::string& v) { s.lr = parse_double(v); }},
    {"train_lm", [](FinetuneStage& s, const std::string& v) { s.train_lm = parse_bool(v); }},
    {"data", [](FinetuneStage& s, const std::string& v) { s.data = v; }},
};

// "stage.3.lr" -> (3, "lr"); nullopt when the key is not an indexed section.
std::optional<std::pair<int, std::string>> indexed(const std::string& key, std::string_view section) {
  const std::string prefix = std::string(section) + ".";
  if (!starts_with(key, prefix)) {
    return std::nullopt;
  }
  const auto rest = key.substr(prefix.size());
  const auto dot = rest.find('.');
  if (dot == std::string::npos) {
    return std::nullopt;
  }
  int index = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + dot, index);
  if (ec != std::errc() || ptr != rest.data() + dot || index < 0 || index > 64) {
    return std::nullopt;
  }
  return std::pair{index, rest.substr(dot + 1)};
}

void collect(std::vector<std::string>& errors, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    errors.emplace_back(e.what());
  } catch (const std::exception& e) {
    errors.emplace_back(e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  std::vector<std::string> errors;
  collect(errors, [&] { model.validate(); });
  if (stages.empty()) {
    errors.emplace_back("at least one [stage.N] section is required");
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    collect(errors, [&] {
      try {
        stages[i].validate(model.vision.patch);
      } catch (const Error& e) {
        fail(ErrorKind::config, "stage." + std::to_string(i) + ": " + e.what());
      }
    });
  }
  if (!(loss.lambda_caption >= 0.0)) {
    errors.emplace_back("loss.lambda_caption must be >= 0");
  }
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    errors.emplace_back("optim betas must lie in [0, 1)");
  }
  if (!(optim.eps > 0.0)) {
    errors.emplace_back("optim.eps must be > 0");
  }
  if (!(optim.weight_decay >= 0.0)) {
    errors.emplace_back("optim.weight_decay must be >= 0");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    errors.emplace_back("optim.warmup_fraction must lie in [0, 1)");
  }
  if (workers < 1) {
    errors.emplace_back("run.workers must be >= 1");
  }
  if (max_steps < 0) {
    errors.emplace_back("run.max_steps must be >= 0");
  }
  if (data.generate_n < 1) {
    errors.emplace_back("data.generate_n must be >= 1");
  }
  if (data.generate_resolution < 8) {
    errors.emplace_back("data.generate_resolution must be >= 8");
  }
  if (data.cache_images < 1) {
    errors.emplace_back("data.cache_images must be >= 1");
  }
  collect(errors, [&] { finetune.lm.validate(); });
  if (finetune.projector_hidden < 1) {
    errors.emplace_back("finetune.projector_hidden must be >= 1");
  }
  if (finetune.resolution < 0) {
    errors.emplace_back("finetune.resolution must be >= 0");
  }
  if (finetune.max_tiles < 1) {
    errors.emplace_back("finetune.max_tiles must be >= 1");
  }
  for (const double m : {finetune.multipliers.vision, finetune.multipliers.projector,
                         finetune.multipliers.lm}) {
    if (!(m >= 0.0)) {
      errors.emplace_back("finetune multipliers must be >= 0");
      break;
    }
  }
  for (std::size_t i = 0; i < finetune.stages.size(); ++i) {
    const auto& s = finetune.stages[i];
    if (s.steps < 1 || s.batch < 1 || !(s.lr >= 0.0)) {
      errors.emplace_back("ft_stage." + std::to_string(i) +
                          ": steps and batch must be >= 1 and lr >= 0");
    }
  }
  if (eval.templates.empty()) {
    errors.emplace_back("eval.templates must list at least one template");
  }
  for (const auto& t : eval.templates) {
    if (t.find("{}") == std::string::npos) {
      errors.emplace_back("eval template '" + t + "' has no {} placeholder");
    }
  }
  for (const int k : eval.ks) {
    if (k < 1) {
      errors.emplace_back("eval.ks entries must be >= 1");
      break;
    }
  }
  if (!errors.empty()) {
    fail(ErrorKind::config, "invalid config:\n  " + join(errors, "\n  "));
  }
}

RunConfig parse_run_config(std::string_view text, const std::vector<std::string>& overrides) {
  auto kv = parse_flat_ini(text);
  std::vector<std::string> errors;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      errors.push_back("override '" + o + "' is not of the form section.key=value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }

  RunConfig c;
  if (auto it = kv.find("model.preset"); it != kv.end()) {
    collect(errors, [&] {
      c.model = ModelConfig::preset(it->second);
      c.model_preset = it->second;
    });
    kv.erase(it);
  }

  std::map<int, StageSchedule> stages;
  std::map<int, FinetuneStage> ft_stages;
  std::set<int> explicit_warmup;
  const auto& table = setters();
  for (const auto& [key, value] : kv) {
    auto report = [&](std::string msg) {
      constexpr std::string_view prefix = "config error: ";
      if (starts_with(msg, prefix)) {
        msg.erase(0, prefix.size());
      }
      errors.push_back(key + ": " + msg);
    };
    if (auto st = indexed(key, "stage")) {
      auto f = kStageKeys.find(st->second);
      if (f == kStageKeys.end()) {
        report("unknown key");
        continue;
      }
      if (st->second == "warmup") {
        explicit_warmup.insert(st->first);
      }
      try {
        f->second(stages[st->first], value);
      } catch (const std::exception& e) {
        report(e.what());
      }
      continue;
    }
    if (auto st = indexed(key, "ft_stage")) {
      auto f = kFtStageKeys.find(st->second);
      if (f == kFtStageKeys.end()) {
        report("unknown key");
        continue;
      }
      try {
        f->second(ft_stages[st->first], value);
      } catch (const std::exception& e) {
        report(e.what());
      }
      continue;
    }
    auto f = table.find(key);
    if (f == table.end()) {
      report("unknown key");
      continue;
    }
    try {
      f->second(c, value);
    } catch (const std::exception& e) {
      report(e.what());
    }
  }

  int expect = 0;
  for (auto& [index, stage] : stages) {
    if (index != expect++) {
      errors.push_back("stage sections must be numbered 0, 1, 2, ... without gaps");
      break;
    }
    if (!explicit_warmup.contains(index)) {
      stage.warmup_samples =
          static_cast<std::int64_t>(c.warmup_fraction * static_cast<double>(stage.samples));
    }
    c.stages.push_back(stage);
  }
  expect = 0;
  for (auto& [index, stage] : ft_stages) {
    if (index != expect++) {
      errors.push_back("ft_stage sections must be numbered 0, 1, 2, ... without gaps");
      break;
    }
    c.finetune.stages.push_back(stage);
  }
  collect(errors, [&] { sync_tokenizer(c.model.text); });

  if (!errors.empty()) {
    fail(ErrorKind::config, "invalid config:\n  " + join(errors, "\n  "));
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::config, "cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), overrides);
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream o;
  const auto& v = c.model.vision;
  const auto& t = c.model.text;
  o << "[run]\n"
    << "name = " << c.name << "\n"
    << "seed = " << c.seed << "\n"
    << "output_dir = " << c.output_dir << "\n"
    << "strict = " << fmt_bool(c.strict) << "\n"
    << "workers = " << c.workers << "\n"
    << "max_steps = " << c.max_steps << "\n\n"
    << "[model]\n"
    << "preset = " << c.model_preset << "\n\n"
    << "[vision]\n"
    << "layers = " << v.layers << "\n"
    << "width = " << v.width << "\n"
    << "heads = " << v.heads << "\n"
    << "mlp_dim = " << v.mlp_dim << "\n"
    << "patch = " << v.patch << "\n"
    << "resolution = " << v.resolution << "\n"
    << "pool = " << to_string(v.pool) << "\n\n"
    << "[text]\n"
    << "encoder_context = " << t.encoder_context << "\n"
    << "decoder_context = " << t.decoder_context << "\n"
    << "tokenizer = " << t.tokenizer << "\n"
    << "layers = " << t.layers << "\n"
    << "width = " << t.width << "\n"
    << "heads = " << t.heads << "\n"
    << "mlp_dim = " << t.mlp_dim << "\n"
    << "decoder_layers = " << t.decoder_layers << "\n\n"
    << "[loss]\n"
    << "use_decoder = " << fmt_bool(c.loss.use_decoder) << "\n"
    << "caption_source = " << to_string(c.loss.caption_source) << "\n"
    << "lambda_caption = " << fmt_double(c.loss.lambda_caption) << "\n\n"
    << "[optim]\n"
    << "beta1 = " << fmt_double(c.optim.beta1) << "\n"
    << "beta2 = " << fmt_double(c.optim.beta2) << "\n"
    << "eps = " << fmt_double(c.optim.eps) << "\n"
    << "weight_decay = " << fmt_double(c.optim.weight_decay) << "\n"
    << "clip_norm = " << fmt_double(c.optim.clip_norm) << "\n"
    << "warmup_fraction = " << fmt_double(c.warmup_fraction) << "\n\n";
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const auto& s = c.stages[i];
    o << "[stage." << i << "]\n"
      << "resolution = " << s.resolution << "\n"
      << "samples = " << s.samples << "\n"
      << "batch = " << s.batch << "\n"
      << "lr = " << fmt_double(s.base_lr) << "\n"
      << "warmup = " << s.warmup_samples << "\n\n";
  }
  o << "[data]\n"
    << "train = " << c.data.train << "\n"
    << "eval = " << c.data.eval << "\n"
    << "generate_n = " << c.data.generate_n << "\n"
    << "generate_seed = " << c.data.generate_seed << "\n"
    << "generate_resolution = " << c.data.generate_resolution << "\n"
    << "stratified = " << fmt_bool(c.data.stratified) << "\n"
    << "flip = " << fmt_bool(c.data.flip) << "\n"
    << "cache_images = " << c.data.cache_images << "\n\n";
  const auto& f = c.finetune;
  o << "[finetune]\n"
    << "mode = " << to_string(f.mode) << "\n"
    << "vision_multiplier = " << fmt_double(f.multipliers.vision) << "\n"
    << "projector_multiplier = " << fmt_double(f.multipliers.projector) << "\n"
    << "lm_multiplier = " << fmt_double(f.multipliers.lm) << "\n"
    << "vision_checkpoint = " << f.vision_checkpoint << "\n"
    << "lm_checkpoint = " << f.lm_checkpoint << "\n"
    << "projector_hidden = " << f.projector_hidden << "\n"
    << "projector_activation = " << to_string(f.projector_activation) << "\n"
    << "anyres = " << fmt_bool(f.anyres) << "\n"
    << "max_tiles = " << f.max_tiles << "\n"
    << "resolution = " << f.resolution << "\n\n"
    << "[lm]\n"
    << "layers = " << f.lm.layers << "\n"
    << "width = " << f.lm.width << "\n"
    << "heads = " << f.lm.heads << "\n"
    << "mlp_dim = " << f.lm.mlp_dim << "\n"
    << "context = " << f.lm.context << "\n"
    << "tokenizer = " << f.lm.tokenizer << "\n\n";
  for (std::size_t i = 0; i < f.stages.size(); ++i) {
    const auto& s = f.stages[i];
    o << "[ft_stage." << i << "]\n"
      << "name = " << s.name << "\n"
      << "steps = " << s.steps << "\n"
      << "batch = " << s.batch << "\n"
      << "lr = " << fmt_double(s.lr) << "\n"
      << "train_lm = " << fmt_bool(s.train_lm) << "\n"
      << "data = " << s.data << "\n\n";
  }
  std::vector<std::string> ks;
  for (int k : c.eval.ks) {
    ks.push_back(std::to_string(k));
  }
  o << "[eval]\n"
    << "checkpoint = " << c.eval.checkpoint << "\n"
    << "templates = " << join(c.eval.templates, " | ") << "\n"
    << "ks = " << join(ks, ",") << "\n"
    << "dataset_id = " << c.eval.dataset_id << "\n";
  return o.str();
}

std::string vision_config_to_ini(const VisionConfig& v) {
  std::ostringstream o;
  o << "[vision]\n"
    << "layers = " << v.layers << "\n"
    << "width = " << v.width << "\n"
    << "heads = " << v.heads << "\n"
    << "mlp_dim = " << v.mlp_dim << "\n"
    << "patch = " << v.patch << "\n"
    << "resolution = " << v.resolution << "\n"
    << "pool = " << to_string(v.pool) << "\n";
  return o.str();
}

VisionConfig vision_config_from_ini(std::string_view text) {
  const auto kv = parse_flat_ini(text);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(std::string("vision.") + key);
    require(it != kv.end(), ErrorKind::config, std::string("vision config is missing '") + key + "'");
    return it->second;
  };
  VisionConfig v;
  v.layers = parse_int<int>(get("layers"));
  v.width = parse_int<int>(get("width"));
  v.heads = parse_int<int>(get("heads"));
  v.mlp_dim = parse_int<int>(get("mlp_dim"));
  v.patch = parse_int<int>(get("patch"));
  v.resolution = parse_int<int>(get("resolution"));
  v.pool = parse_pool(get("pool"));
  v.validate();
  return v;
}

std::vector<StageSchedule> desk_curriculum() {
  return with_warmup({{.resolution = 64, .samples = 12800, .batch = 32, .base_lr = 1e-3},
                      {.resolution = 96, .samples = 1024, .batch = 16, .base_lr = 5e-5},
                      {.resolution = 128, .samples = 256, .batch = 8, .base_lr = 1.25e-5}},
                     0.02);
}

namespace {

RunConfig desk_base(const std::string& name) {
  RunConfig c;
  c.name = name;
  c.model_preset = "micro-probe";
  c.model = ModelConfig::preset("micro-probe");
  c.stages = desk_curriculum();
  c.data.generate_n = 256;
  c.data.generate_resolution = 128;
  c.finetune.lm.tokenizer = "probe";
  c.finetune.resolution = 64;
  c.finetune.stages = {
      {.name = "align", .steps = 100, .batch = 8, .lr = 1e-3, .train_lm = false, .data = ""},
      {.name = "instruct", .steps = 3000, .batch = 8, .lr = 3e-3, .train_lm = true, .data = ""}};
  return c;
}

// Stage budgets as (samples, batch, lr) at a given model; L/14 uses 84/224/336.
RunConfig paper_base(const std::string& name, const std::string& preset) {
  RunConfig c;
  c.name = name;
  c.model_preset = preset;
  c.model = ModelConfig::preset(preset);
  c.model.text.encoder_context = 80;
  c.model.text.decoder_context = 128;
  return c;
}

StageSchedule paper_stage(int res, std::int64_t samples, int batch, double lr) {
  return {.resolution = res, .samples = samples, .batch = batch, .base_lr = lr};
}

}  // namespace

std::vector<std::string> experiment_preset_names() {
  return {"desk",
          "overfit-probe",
          "paper-curriculum",
          "budget-512m-224-128m-336",
          "budget-1024m-224-256m-336",
          "budget-512m-224-512m-336",
          "budget-0m-224-768m-336",
          "ablation-fig2",
          "patch-pair",
          "finetune-pair"};
}

std::vector<RunConfig> experiment_preset(std::string_view name) {
  constexpr std::int64_t M = 1'000'000;
  if (name == "desk") {
    return {desk_base("desk")};
  }
  if (name == "overfit-probe") {
    auto c = desk_base("overfit-probe");
    c.stages = with_warmup({{.resolution = 32, .samples = 2000 * 32, .batch = 32, .base_lr = 1e-3}},
                           0.02);
    c.data.generate_resolution = 32;
    c.optim.weight_decay = 0.0;
    return {c};
  }
  if (name == "paper-curriculum") {
    auto c = paper_base("paper-curriculum", "large");
    c.stages = with_warmup({paper_stage(84, 12800 * M, 32768, 8e-6),
                            paper_stage(224, 1024 * M, 16384, 4e-7),
                            paper_stage(336, 256 * M, 8192, 1e-7)},
                           0.02);
    return {c};
  }
  struct Budget {
    const char* name;
    std::int64_t low;
    std::int64_t high;
  };
  constexpr Budget kBudgets[] = {{"budget-512m-224-128m-336", 512, 128},
                                 {"budget-1024m-224-256m-336", 1024, 256},
                                 {"budget-512m-224-512m-336", 512, 512},
                                 {"budget-0m-224-768m-336", 0, 768}};
  for (const auto& b : kBudgets) {
    if (name == b.name) {
      auto c = paper_base(b.name, "large");
      std::vector<StageSchedule> stages;
      if (b.low > 0) {
        stages.push_back(paper_stage(224, b.low * M, 16384, 4e-7));
      }
      stages.push_back(paper_stage(336, b.high * M, 8192, 1e-7));
      c.stages = with_warmup(stages, 0.02);
      return {c};
    }
  }
  if (name == "ablation-fig2") {
    auto full = desk_base("ablation-fig2-full");
    auto no_decoder = full;
    no_decoder.name = "ablation-fig2-no-decoder";
    no_decoder.loss.use_decoder = false;
    auto original = full;
    original.name = "ablation-fig2-original-caps";
    original.loss.caption_source = CaptionSource::original;
    return {full, no_decoder, original};
  }
  if (name == "patch-pair") {
    auto p8 = desk_base("patch-8");
    p8.model.vision.patch = 8;
    auto p16 = desk_base("patch-16");
    p16.model.vision.patch = 16;
    return {p8, p16};
  }
  if (name == "finetune-pair") {
    auto frozen = desk_base("finetune-frozen");
    frozen.finetune.mode = TuneMode::frozen_encoder;
    auto full = desk_base("finetune-full");
    full.finetune.mode = TuneMode::full_finetune;
    return {frozen, full};
  }
  fail(ErrorKind::config, "unknown experiment preset '" + std::string(name) + "'");
}

std::vector<CaptionedImage> load_run_records(const RunConfig& config, bool eval) {
  const auto& path = eval && !config.data.eval.empty() ? config.data.eval : config.data.train;
  if (!path.empty()) {
    return load_records(path);
  }
  ProbeOptions options;
  options.stratified = config.data.stratified;
  return gen_probe_dataset(config.data.generate_seed, config.data.generate_n,
                           config.data.generate_resolution, options);
}

TrainerOptions trainer_options(const RunConfig& config) {
  TrainerOptions o;
  o.model = config.model;
  o.toggles = config.loss;
  o.optimizer = config.optim;
  o.seed = config.seed;
  o.strict = config.strict;
  o.flip = config.data.flip;
  o.cache_images = static_cast<std::size_t>(config.data.cache_images);
  o.max_steps = config.max_steps;
  o.config_text = serialize_run_config(config);
  return o;
}

VisionConfig final_vision(const RunConfig& config) {
  VisionConfig v = config.model.vision;
  if (!config.stages.empty()) {
    v.resolution = config.stages.back().resolution;
  }
  return v;
}

MllmConfig mllm_config(const RunConfig& config, const VisionConfig& vision) {
  MllmConfig m;
  m.vision = vision;
  if (config.finetune.resolution > 0) {
    m.vision.resolution = config.finetune.resolution;
  }
  m.lm = config.finetune.lm;
  m.projector = ProjectorConfig{.in_width = vision.width,
                                .hidden = config.finetune.projector_hidden,
                                .out_width = config.finetune.lm.width,
                                .activation = config.finetune.projector_activation};
  m.anyres = config.finetune.anyres;
  m.max_tiles = config.finetune.max_tiles;
  m.validate();
  return m;
}

}  // namespace openvision
