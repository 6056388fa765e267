#include "gain/convert.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gain/io.hpp"

GAIN_NAMESPACE_BEGIN

nlohmann::json ConvertReport::to_json() const {
  return {{"format", format}, {"nodes", nodes}, {"edges", edges},   {"classes", classes},
          {"graphs", graphs}, {"features", features}, {"train", train}, {"val", val},
          {"test", test}};
}

namespace {

namespace fs = std::filesystem;

fs::path locate(const fs::path& dir, const std::string& name) {
  for (const fs::path& p : {dir / name, dir / "data" / name, dir / "raw" / name}) {
    if (fs::exists(p)) return p;
  }
  throw DataError("missing " + name + " under " + dir.string());
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}

std::size_t count_pairs(const Graph& g) {
  std::size_t arcs = 0, loops = 0;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (NodeId u : g.neighbors(v).nodes) {
      ++arcs;
      loops += u == v;
    }
  }
  return (arcs - loops) / 2 + loops;
}

void fill_split_counts(const Graph& g, ConvertReport& r) {
  r.train = r.val = r.test = 0;
  for (Split s : g.node_split) {
    r.train += s == Split::train;
    r.val += s == Split::val;
    r.test += s == Split::test;
  }
}

}  // namespace

Graph read_pubmed_diabetes(const fs::path& raw_dir, const PubmedOptions& options,
                           ConvertReport* report) {
  const fs::path node_path = locate(raw_dir, "Pubmed-Diabetes.NODE.paper.tab");
  const fs::path edge_path = locate(raw_dir, "Pubmed-Diabetes.DIRECTED.cites.tab");

  std::ifstream nodes_in(node_path);
  if (!nodes_in) throw DataError("cannot open " + node_path.string());
  std::string line;
  std::getline(nodes_in, line);  // NO_FEATURES
  if (!std::getline(nodes_in, line)) throw DataError(node_path.string() + ": missing feature header");

  // Header fields look like "numeric:w-rat:0.0"; each declares one column.
  std::unordered_map<std::string, std::size_t> column;
  for (const auto& field : split_tabs(line)) {
    if (field.rfind("numeric:", 0) != 0) continue;
    const auto second = field.find(':', 8);
    column.emplace(field.substr(8, second == std::string::npos ? std::string::npos : second - 8),
                   column.size());
  }
  if (column.empty()) throw DataError(node_path.string() + ":2: no numeric feature declarations");

  std::unordered_map<std::string, NodeId> id_of;
  std::vector<std::int32_t> labels;
  std::vector<Real> feats;
  std::size_t line_no = 2;
  while (std::getline(nodes_in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_tabs(line);
    const std::string where = node_path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 2) throw DataError(where + ": expected id and label");
    if (!id_of.emplace(fields[0], static_cast<NodeId>(labels.size())).second) {
      throw DataError(where + ": duplicate paper id " + fields[0]);
    }
    std::vector<Real> row(column.size(), Real(0));
    std::int32_t label = -1;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto eq = fields[i].find('=');
      if (eq == std::string::npos) continue;
      const std::string key = fields[i].substr(0, eq);
      const std::string val = fields[i].substr(eq + 1);
      try {
        if (key == "label") {
          label = std::stoi(val) - 1;
        } else if (auto it = column.find(key); it != column.end()) {
          row[it->second] = static_cast<Real>(std::stod(val));
        }
      } catch (const std::exception&) {
        throw DataError(where + ": bad value for " + key);
      }
    }
    if (label < 0 || label > 2) throw DataError(where + ": label outside 1..3");
    labels.push_back(label);
    feats.insert(feats.end(), row.begin(), row.end());
  }
  const std::size_t n = labels.size();
  if (n == 0) throw DataError(node_path.string() + ": no nodes");

  std::ifstream edges_in(edge_path);
  if (!edges_in) throw DataError("cannot open " + edge_path.string());
  std::vector<WeightedEdge> edges;
  line_no = 0;
  auto paper = [&](const std::string& field, const std::string& where) {
    const auto colon = field.find(':');
    auto it = id_of.find(colon == std::string::npos ? field : field.substr(colon + 1));
    if (it == id_of.end()) throw DataError(where + ": unknown paper " + field);
    return it->second;
  };
  while (std::getline(edges_in, line)) {
    ++line_no;
    const auto fields = split_tabs(line);
    if (fields.size() < 4 || fields[2] != "|") continue;  // headers
    const std::string where = edge_path.string() + ":" + std::to_string(line_no);
    edges.push_back({paper(fields[1], where), paper(fields[3], where), 1.0});
  }
  for (auto& e : edges) {
    if (e.src > e.dst) std::swap(e.src, e.dst);
  }
  std::sort(edges.begin(), edges.end(),
            [](const WeightedEdge& a, const WeightedEdge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const WeightedEdge& a, const WeightedEdge& b) { return a.src == b.src && a.dst == b.dst; }),
              edges.end());

  Graph g = Graph::from_edges(n, edges, true);
  g.features = Tensor({n, column.size()}, std::move(feats));
  g.labels.kind = LabelKind::single;
  g.labels.num_classes = 3;
  g.labels.single = std::move(labels);
  g.labels.present.assign(n, 1);

  if (options.val + options.test > n) throw ConfigError("validation + test sizes exceed the node count");
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::mt19937_64 rng(derive_seed(options.seed, "convert/pubmed"));
  std::shuffle(order.begin(), order.end(), rng);
  g.node_split.assign(n, Split::train);
  for (std::size_t i = 0; i < options.val + options.test; ++i) {
    g.node_split[order[i]] = i < options.test ? Split::test : Split::val;
  }
  g.validate();

  if (report) {
    report->format = "pubmed-diabetes";
    report->nodes = n;
    report->edges = count_pairs(g);
    report->classes = 3;
    report->graphs = 1;
    report->features = column.size();
    fill_split_counts(g, *report);
  }
  return g;
}

Graph read_ppi(const fs::path& raw_dir, ConvertReport* report) {
  struct Part {
    const char* prefix;
    Split split;
  };
  const Part parts[] = {{"train", Split::train}, {"valid", Split::val}, {"test", Split::test}};

  std::vector<WeightedEdge> edges;
  std::vector<Real> feats;
  std::vector<std::uint8_t> multi;
  std::vector<Split> split;
  std::set<std::pair<int, long long>> graph_ids;
  std::size_t width = 0, classes = 0, offset = 0;

  for (std::size_t pi = 0; pi < 3; ++pi) {
    const Part& part = parts[pi];
    const std::string pre = part.prefix;
    const NpyArray x = read_npy(locate(raw_dir, pre + "_feats.npy"));
    const NpyArray y = read_npy(locate(raw_dir, pre + "_labels.npy"));
    const NpyArray gid = read_npy(locate(raw_dir, pre + "_graph_id.npy"));
    if (x.shape.size() != 2 || y.shape.size() != 2 || gid.shape.size() != 1) {
      throw DataError(pre + ": expected 2-D features/labels and 1-D graph ids");
    }
    const std::size_t n = x.shape[0];
    if (y.shape[0] != n || gid.shape[0] != n) throw DataError(pre + ": row counts disagree");
    if (width == 0) {
      width = x.shape[1];
      classes = y.shape[1];
    } else if (x.shape[1] != width || y.shape[1] != classes) {
      throw DataError(pre + ": feature or class width differs from the train files");
    }
    for (double v : x.data) feats.push_back(static_cast<Real>(v));
    for (double v : y.data) {
      if (v != 0 && v != 1) throw DataError(pre + "_labels.npy: labels must be 0/1");
      multi.push_back(v != 0);
    }
    for (double v : gid.data) graph_ids.emplace(static_cast<int>(pi), static_cast<long long>(v));
    split.insert(split.end(), n, part.split);

    const fs::path gpath = locate(raw_dir, pre + "_graph.json");
    std::ifstream in(gpath);
    if (!in) throw DataError("cannot open " + gpath.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(gpath.string() + ": " + e.what());
    }
    // Node ids are positions unless the nodes carry explicit integer ids.
    std::unordered_map<long long, NodeId> local;
    const auto& nodes = j.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const long long id = nodes[i].contains("id") ? nodes[i]["id"].get<long long>() : static_cast<long long>(i);
      local.emplace(id, static_cast<NodeId>(i));
    }
    if (local.size() != n) throw DataError(gpath.string() + ": node count differs from features");
    const auto& links = j.contains("links") ? j.at("links") : j.at("edges");
    for (const auto& l : links) {
      auto s = local.find(l.at("source").get<long long>());
      auto t = local.find(l.at("target").get<long long>());
      if (s == local.end() || t == local.end()) throw DataError(gpath.string() + ": link to unknown node");
      edges.push_back({static_cast<NodeId>(offset + s->second), static_cast<NodeId>(offset + t->second), 1.0});
    }
    offset += n;
  }

  for (auto& e : edges) {
    if (e.src > e.dst) std::swap(e.src, e.dst);
  }
  std::sort(edges.begin(), edges.end(),
            [](const WeightedEdge& a, const WeightedEdge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const WeightedEdge& a, const WeightedEdge& b) { return a.src == b.src && a.dst == b.dst; }),
              edges.end());

  Graph g = Graph::from_edges(offset, edges, true);
  g.features = Tensor({offset, width}, std::move(feats));
  g.labels.kind = LabelKind::multi;
  g.labels.num_classes = classes;
  g.labels.multi = std::move(multi);
  g.labels.single.assign(offset, -1);
  g.labels.present.assign(offset, 1);
  g.node_split = std::move(split);
  g.validate();

  if (report) {
    report->format = "ppi";
    report->nodes = offset;
    report->edges = count_pairs(g);
    report->classes = classes;
    report->graphs = graph_ids.size();
    report->features = width;
    fill_split_counts(g, *report);
  }
  return g;
}

ConvertReport convert_dataset(const fs::path& raw_dir, const std::string& format,
                              const fs::path& out_dir, std::uint64_t seed) {
  ConvertReport report;
  Graph g;
  if (format == "pubmed-diabetes" || format == "pubmed") {
    PubmedOptions opts;
    opts.seed = seed;
    g = read_pubmed_diabetes(raw_dir, opts, &report);
  } else if (format == "ppi") {
    g = read_ppi(raw_dir, &report);
  } else {
    throw ConfigError("unknown dataset format '" + format + "' (expected pubmed-diabetes or ppi)");
  }
  write_dataset(out_dir, g);
  return report;
}

GAIN_NAMESPACE_END
