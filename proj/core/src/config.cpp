#include "segp/config.hpp"

#include <fstream>
#include <set>

namespace segp {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

class Fields {
 public:
  Fields(const json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
    if (!obj_.is_object()) throw ConfigError("section '" + section_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& target) {
    if (!obj_.contains(key)) return;
    used_.insert(key);
    try {
      target = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  void matrix(const char* key, Matrix& target) {
    if (!obj_.contains(key)) return;
    used_.insert(key);
    const json& rows = obj_.at(key);
    if (!rows.is_array()) throw ConfigError(section_ + "." + key + ": expected array of rows");
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r == 0 ? 0 : static_cast<Eigen::Index>(rows[0].size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      const json& row = rows[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
        throw ConfigError(section_ + "." + key + ": rows must be arrays of equal length");
      }
      for (Eigen::Index j = 0; j < c; ++j) {
        const json& v = row[static_cast<std::size_t>(j)];
        if (!v.is_number()) throw ConfigError(section_ + "." + key + ": non-numeric entry");
        m(i, j) = v.get<double>();
      }
    }
    target = m;
  }

  void vector(const char* key, Vector& target) {
    if (!obj_.contains(key)) return;
    used_.insert(key);
    const json& arr = obj_.at(key);
    if (!arr.is_array()) throw ConfigError(section_ + "." + key + ": expected array");
    Vector v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw ConfigError(section_ + "." + key + ": non-numeric entry");
      v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    }
    target = v;
  }

  const json* section(const char* key) {
    if (!obj_.contains(key)) return nullptr;
    used_.insert(key);
    return &obj_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) {
        throw ConfigError("unknown key '" + key + "' in section '" + section_ + "'");
      }
    }
  }

 private:
  const json& obj_;
  std::string section_;
  std::set<std::string> used_;
};

void read_dataset_fields(Fields& f, DatasetConfig& d) {
  f.get("horizon", d.horizon);
  f.get("euler_step", d.euler_step);
  f.get("sample_period", d.sample_period);
  f.get("frames", d.frames);
  f.get("noise_var", d.noise_var);
  f.get("canvas", d.canvas);
  f.get("ball_radius", d.ball_radius);
  f.get("world_halfwidth", d.world_halfwidth);
  f.vector("m_x0", d.m_x0);
  f.get("sigma_x0", d.sigma_x0);
  f.get("input_slope", d.input_slope);
  f.get("input_variance", d.input_variance);
  f.get("input_lengthscale", d.input_lengthscale);
  f.get("count", d.count);
  f.get("seed", d.seed);
}

void read_system_fields(Fields& f, DatasetConfig& d) {
  f.matrix("A", d.a);
  f.matrix("B", d.b);
  f.matrix("C", d.c);
  f.matrix("D", d.d);
  f.matrix("P", d.p);
}

json dataset_fields(const DatasetConfig& d) {
  return json{{"horizon", d.horizon},
              {"euler_step", d.euler_step},
              {"sample_period", d.sample_period},
              {"frames", d.frames},
              {"noise_var", d.noise_var},
              {"canvas", d.canvas},
              {"ball_radius", d.ball_radius},
              {"world_halfwidth", d.world_halfwidth},
              {"m_x0", vector_to_json(d.m_x0)},
              {"sigma_x0", d.sigma_x0},
              {"input_slope", d.input_slope},
              {"input_variance", d.input_variance},
              {"input_lengthscale", d.input_lengthscale},
              {"count", d.count},
              {"seed", d.seed}};
}

json system_fields(const DatasetConfig& d) {
  return json{{"A", matrix_to_json(d.a)},
              {"B", matrix_to_json(d.b)},
              {"C", matrix_to_json(d.c)},
              {"D", matrix_to_json(d.d)},
              {"P", matrix_to_json(d.p)}};
}

}  // namespace

std::string kl_order_name(KlOrder order) {
  return order == KlOrder::kPosteriorPrior ? "posterior_prior" : "prior_posterior";
}

KlOrder parse_kl_order(const std::string& name) {
  if (name == "posterior_prior") return KlOrder::kPosteriorPrior;
  if (name == "prior_posterior") return KlOrder::kPriorPosterior;
  throw ConfigError("kl_order must be 'posterior_prior' or 'prior_posterior', got '" + name + "'");
}

ModelShape AppConfig::model_shape() const {
  ModelShape s = model;
  s.canvas = dataset.canvas;
  s.latent_dim = dataset.latent_dim();
  s.state_dim = static_cast<int>(dataset.a.rows());
  s.temperature = temperature;
  return s;
}

json dataset_config_to_json(const DatasetConfig& cfg) {
  json j = dataset_fields(cfg);
  j["system"] = system_fields(cfg);
  return j;
}

DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig d;
  Fields f(j, "dataset");
  read_dataset_fields(f, d);
  if (const json* sys = f.section("system")) {
    Fields fs(*sys, "system");
    read_system_fields(fs, d);
    fs.finish();
  }
  f.finish();
  d.validate();
  return d;
}

json to_json(const AppConfig& cfg) {
  const TrainConfig& t = cfg.train;
  return json{
      {"dataset", dataset_fields(cfg.dataset)},
      {"system", system_fields(cfg.dataset)},
      {"quadrature", {{"fine_step", cfg.quadrature.fine_step}}},
      {"model",
       {{"feature_grid", cfg.model.feature_grid},
        {"encoder_hidden", cfg.model.encoder_hidden},
        {"decoder_hidden", cfg.model.decoder_hidden},
        {"temperature", cfg.temperature}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"beta", t.beta},
        {"lambda_start", t.lambda_start},
        {"lambda_end", t.lambda_end},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"train_fraction", t.train_fraction},
        {"seed", t.seed},
        {"gradient_check", t.gradient_check},
        {"kl_order", kl_order_name(t.kl_order)},
        {"eval_train_videos", t.eval_train_videos},
        {"v2_init_std", t.v2_init_std},
        {"logvar_init", t.logvar_init}}},
      {"baseline", {{"steps", cfg.baseline.steps}, {"step_size", cfg.baseline.step_size}}}};
}

AppConfig app_config_from_json(const json& j) {
  AppConfig cfg;
  Fields top(j, "<root>");
  if (const json* s = top.section("dataset")) {
    Fields f(*s, "dataset");
    read_dataset_fields(f, cfg.dataset);
    f.finish();
  }
  if (const json* s = top.section("system")) {
    Fields f(*s, "system");
    read_system_fields(f, cfg.dataset);
    f.finish();
  }
  if (const json* s = top.section("quadrature")) {
    Fields f(*s, "quadrature");
    f.get("fine_step", cfg.quadrature.fine_step);
    f.finish();
  }
  if (const json* s = top.section("model")) {
    Fields f(*s, "model");
    f.get("feature_grid", cfg.model.feature_grid);
    f.get("encoder_hidden", cfg.model.encoder_hidden);
    f.get("decoder_hidden", cfg.model.decoder_hidden);
    f.get("temperature", cfg.temperature);
    f.finish();
  }
  if (const json* s = top.section("train")) {
    Fields f(*s, "train");
    TrainConfig& t = cfg.train;
    f.get("learning_rate", t.learning_rate);
    f.get("weight_decay", t.weight_decay);
    f.get("adam_beta1", t.adam_beta1);
    f.get("adam_beta2", t.adam_beta2);
    f.get("adam_eps", t.adam_eps);
    f.get("beta", t.beta);
    f.get("lambda_start", t.lambda_start);
    f.get("lambda_end", t.lambda_end);
    f.get("epochs", t.epochs);
    f.get("batch_size", t.batch_size);
    f.get("train_fraction", t.train_fraction);
    f.get("seed", t.seed);
    f.get("gradient_check", t.gradient_check);
    std::string order = kl_order_name(t.kl_order);
    f.get("kl_order", order);
    t.kl_order = parse_kl_order(order);
    f.get("eval_train_videos", t.eval_train_videos);
    f.get("v2_init_std", t.v2_init_std);
    f.get("logvar_init", t.logvar_init);
    f.finish();
  }
  if (const json* s = top.section("baseline")) {
    Fields f(*s, "baseline");
    f.get("steps", cfg.baseline.steps);
    f.get("step_size", cfg.baseline.step_size);
    f.finish();
  }
  top.finish();
  try {
    cfg.dataset.validate();
    cfg.model_shape().validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.quadrature.fine_step > 0.0)) throw ConfigError("quadrature.fine_step must be > 0");
  if (!(cfg.temperature > 0.0)) throw ConfigError("model.temperature must be > 0");
  if (cfg.baseline.steps < 0 || !(cfg.baseline.step_size > 0.0)) {
    throw ConfigError("baseline: need steps >= 0 and step_size > 0");
  }
  return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return app_config_from_json(j);
}

}  // namespace segp
