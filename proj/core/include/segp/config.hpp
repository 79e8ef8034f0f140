#ifndef SEGP_CONFIG_HPP
#define SEGP_CONFIG_HPP

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "segp/segp_prior.hpp"
#include "segp/simulator.hpp"
#include "segp/train.hpp"
#include "segp/vae.hpp"

namespace segp {

struct BaselineConfig {
  int steps = 500;
  double step_size = 1e-2;
};

/// One file for every subcommand. Sections: dataset, system, quadrature,
/// model, train, baseline. Every section and key is optional; unknown ones
/// are rejected.
struct AppConfig {
  DatasetConfig dataset;
  QuadratureConfig quadrature;
  ModelShape model;
  double temperature = 1.0;
  TrainConfig train;
  BaselineConfig baseline;

  /// Model shape with canvas and latent size taken from the dataset section.
  ModelShape model_shape() const;
};

/// Thrown for malformed or unknown configuration content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const AppConfig& cfg);
AppConfig app_config_from_json(const nlohmann::json& j);
AppConfig load_app_config(const std::filesystem::path& path);

nlohmann::json dataset_config_to_json(const DatasetConfig& cfg);
/// Accepts the keys written by dataset_config_to_json (dataset fields plus
/// the system matrices).
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

std::string kl_order_name(KlOrder order);
KlOrder parse_kl_order(const std::string& name);

}  // namespace segp

#endif  // SEGP_CONFIG_HPP
