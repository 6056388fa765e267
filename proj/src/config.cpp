#include "gain/config.hpp"

#include <charconv>
#include <fstream>
#include <set>

GAIN_NAMESPACE_BEGIN

nlohmann::json to_json(const TrainConfig& c) {
  std::vector<std::string> aggs;
  for (auto a : c.aggregators) aggs.emplace_back(to_string(a));
  nlohmann::json j = {{"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"lr_floor", c.lr_floor},
                      {"lr_decay", c.lr_decay},
                      {"lambda1", c.lambda1},
                      {"lambda2", c.lambda2},
                      {"loss_all_layers", c.loss_all_layers},
                      {"sample_sizes", c.sample_sizes},
                      {"layer_dims", c.layer_dims},
                      {"aggregators", aggs},
                      {"use_cross", c.use_cross},
                      {"use_autoencoder", c.use_autoencoder},
                      {"edge_hidden", c.edge_hidden},
                      {"heuristic", to_string(c.heuristic)},
                      {"epsilon", c.epsilon},
                      {"seed", c.seed},
                      {"patience", c.patience},
                      {"workers", c.workers},
                      {"redraw_eval", c.redraw_eval}};
  j["task"] = c.task ? nlohmann::json(to_string(*c.task)) : nlohmann::json(nullptr);
  return j;
}

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

TrainConfig apply_config(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "epochs",     "batch_size", "learning_rate", "lr_floor",   "lr_decay",
      "lambda1",    "lambda2",    "loss_all_layers", "sample_sizes", "layer_dims",
      "aggregators", "use_cross", "use_autoencoder", "edge_hidden", "heuristic",
      "epsilon",    "seed",       "patience",     "task",       "workers",
      "redraw_eval"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "lr_floor", c.lr_floor);
  read(j, "lr_decay", c.lr_decay);
  read(j, "lambda1", c.lambda1);
  read(j, "lambda2", c.lambda2);
  read(j, "loss_all_layers", c.loss_all_layers);
  read(j, "sample_sizes", c.sample_sizes);
  read(j, "layer_dims", c.layer_dims);
  read(j, "use_cross", c.use_cross);
  read(j, "use_autoencoder", c.use_autoencoder);
  read(j, "edge_hidden", c.edge_hidden);
  read(j, "epsilon", c.epsilon);
  read(j, "seed", c.seed);
  read(j, "patience", c.patience);
  read(j, "workers", c.workers);
  read(j, "redraw_eval", c.redraw_eval);
  if (j.contains("aggregators")) {
    std::vector<std::string> names;
    read(j, "aggregators", names);
    c.aggregators.clear();
    for (const auto& s : names) {
      auto a = parse_aggregator(s);
      if (!a) throw ConfigError("unknown aggregator '" + s + "'");
      c.aggregators.push_back(*a);
    }
  }
  if (j.contains("heuristic")) {
    std::string s;
    read(j, "heuristic", s);
    auto h = parse_heuristic(s);
    if (!h) throw ConfigError("unknown heuristic '" + s + "'");
    c.heuristic = *h;
  }
  if (j.contains("task")) {
    if (j["task"].is_null()) {
      c.task.reset();
    } else {
      std::string s;
      read(j, "task", s);
      auto m = parse_task_mode(s);
      if (!m) throw ConfigError("unknown task '" + s + "'");
      c.task = *m;
    }
  }
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<Aggregator> parse_aggregator_list(std::string_view csv) {
  std::vector<Aggregator> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    const std::string_view item = csv.substr(start, comma - start);
    auto a = parse_aggregator(item);
    if (!a) throw ConfigError("unknown aggregator '" + std::string(item) + "'");
    out.push_back(*a);
    start = comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_size_list(std::string_view csv) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    const std::string_view item = csv.substr(start, comma - start);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || item.empty()) {
      throw ConfigError("expected a comma-separated list of integers, got '" + std::string(csv) + "'");
    }
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

GAIN_NAMESPACE_END
