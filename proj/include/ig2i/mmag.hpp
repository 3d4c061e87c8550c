#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ig2i/error.hpp"
#include "ig2i/matrix.hpp"
#include "ig2i/rng.hpp"

namespace ig2i {

using NodeId = std::uint32_t;

struct NodeRecord {
  NodeId id = 0;
  std::string text;        // informational only
  Vector text_embedding;   // length d
  Matrix text_tokens;      // d x l_text
  Matrix image_features;   // d x m
};

/// Compressed sparse row pattern of a symmetric 0/1 adjacency matrix.
struct CsrPattern {
  std::vector<std::size_t> offsets;  // n + 1
  std::vector<NodeId> columns;       // sorted within each row

  std::size_t n_rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t nnz() const { return columns.size(); }
  std::span<const NodeId> row(std::size_t i) const {
    return {columns.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

/// Row-stochastic D^-1 A. Isolated nodes have an empty row.
struct NormalizedAdjacency {
  CsrPattern pattern;
  std::vector<double> values;  // parallel to pattern.columns

  std::size_t n() const { return pattern.n_rows(); }
};

/// Immutable multimodal attributed graph.
class MultimodalGraph {
 public:
  MultimodalGraph() = default;

  /// Validates records (dense ids, shared dimensions, finite values) and
  /// builds the symmetric deduplicated adjacency from an undirected edge list.
  MultimodalGraph(std::vector<NodeRecord> nodes,
                  const std::vector<std::pair<NodeId, NodeId>>& edges)
      : nodes_(std::move(nodes)) {
    validate_nodes();
    build_adjacency(edges);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const NodeRecord& node(NodeId i) const { return nodes_.at(i); }
  const std::vector<NodeRecord>& nodes() const noexcept { return nodes_; }
  const CsrPattern& adjacency() const noexcept { return adj_; }
  std::span<const NodeId> neighbors(NodeId i) const { return adj_.row(i); }
  std::size_t degree(NodeId i) const { return adj_.row(i).size(); }
  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = degree(static_cast<NodeId>(i));
    return out;
  }
  bool has_edge(NodeId a, NodeId b) const {
    auto r = adj_.row(a);
    return std::binary_search(r.begin(), r.end(), b);
  }
  /// Undirected edges with src < dst in ascending order.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (NodeId j : adj_.row(i))
        if (i < j) out.emplace_back(static_cast<NodeId>(i), j);
    return out;
  }

  std::size_t dim() const { return nodes_.empty() ? 0 : nodes_[0].image_features.rows(); }
  std::size_t images_per_node() const {
    return nodes_.empty() ? 0 : nodes_[0].image_features.cols();
  }

 private:
  void validate_nodes() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.id != i) throw Error("node ids must be dense and ordered: expected " +
                                 std::to_string(i) + ", got " + std::to_string(n.id));
      const std::size_t d = nodes_[0].image_features.rows();
      const std::size_t m = nodes_[0].image_features.cols();
      if (n.image_features.rows() != d || n.image_features.cols() != m ||
          n.text_tokens.rows() != d || n.text_embedding.size() != d)
        throw DimensionError("node " + std::to_string(i) +
                             ": embedding dimensions differ from node 0");
      if (d == 0 || m == 0 || n.text_tokens.cols() == 0)
        throw DimensionError("node " + std::to_string(i) + ": empty embedding");
      const bool finite = n.image_features.all_finite() && n.text_tokens.all_finite() &&
                          std::all_of(n.text_embedding.begin(), n.text_embedding.end(),
                                      [](double v) { return std::isfinite(v); });
      if (!finite) throw Error("node " + std::to_string(i) + ": non-finite embedding");
    }
  }

  void build_adjacency(const std::vector<std::pair<NodeId, NodeId>>& edges) {
    const std::size_t n = nodes_.size();
    std::vector<std::vector<NodeId>> rows(n);
    for (auto [a, b] : edges) {
      if (a >= n || b >= n)
        throw Error("dangling edge endpoint " + std::to_string(a) + "-" + std::to_string(b));
      if (a == b) throw Error("self-loop on node " + std::to_string(a));
      rows[a].push_back(b);
      rows[b].push_back(a);
    }
    adj_.offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = rows[i];
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
      adj_.offsets[i + 1] = adj_.offsets[i] + r.size();
    }
    adj_.columns.reserve(adj_.offsets[n]);
    for (auto& r : rows) adj_.columns.insert(adj_.columns.end(), r.begin(), r.end());
  }

  std::vector<NodeRecord> nodes_;
  CsrPattern adj_;
};

inline NormalizedAdjacency normalize_pattern(CsrPattern pattern) {
  NormalizedAdjacency out;
  out.pattern = std::move(pattern);
  out.values.resize(out.pattern.nnz());
  for (std::size_t i = 0; i < out.n(); ++i) {
    const std::size_t lo = out.pattern.offsets[i], hi = out.pattern.offsets[i + 1];
    const double w = hi > lo ? 1.0 / static_cast<double>(hi - lo) : 0.0;
    for (std::size_t k = lo; k < hi; ++k) out.values[k] = w;
  }
  return out;
}

inline NormalizedAdjacency normalize_adjacency(const MultimodalGraph& g) {
  return normalize_pattern(g.adjacency());
}

/// Appends one virtual node (index n) linked to every node in `links`.
inline CsrPattern with_virtual_node(const CsrPattern& base, std::vector<NodeId> links) {
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
  const std::size_t n = base.n_rows();
  const auto v = static_cast<NodeId>(n);
  CsrPattern out;
  out.offsets.assign(n + 2, 0);
  out.columns.reserve(base.nnz() + 2 * links.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto r = base.row(i);
    out.columns.insert(out.columns.end(), r.begin(), r.end());
    if (std::binary_search(links.begin(), links.end(), static_cast<NodeId>(i)))
      out.columns.push_back(v);
    out.offsets[i + 1] = out.columns.size();
  }
  out.columns.insert(out.columns.end(), links.begin(), links.end());
  out.offsets[n + 1] = out.columns.size();
  return out;
}

// ---------------------------------------------------------------------------
// File formats: nodes as JSON Lines, edges as "src<TAB>dst" lines.

namespace detail {

inline Matrix columns_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty())
    throw Error(std::string(field) + " must be a non-empty list of columns");
  const std::size_t cols = j.size();
  const std::size_t rows = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t c = 0; c < cols; ++c) {
    const auto& col = j[c];
    if (!col.is_array() || col.size() != rows)
      throw DimensionError(std::string(field) + " columns have unequal length");
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = col[r].get<double>();
  }
  return m;
}

inline nlohmann::json columns_to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (std::size_t c = 0; c < m.cols(); ++c) out.push_back(m.col(c));
  return out;
}

inline NodeId parse_id(std::string_view s, std::size_t line) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty() ||
      v > std::numeric_limits<NodeId>::max())
    throw ParseError("bad node id '" + std::string(s) + "'", line);
  return static_cast<NodeId>(v);
}

}  // namespace detail

inline NodeRecord parse_node_line(const std::string& line, std::size_t line_no) {
  try {
    const auto j = nlohmann::json::parse(line);
    NodeRecord n;
    const auto id = j.at("id").get<std::int64_t>();
    if (id < 0) throw Error("negative id");
    n.id = static_cast<NodeId>(id);
    if (j.contains("text")) n.text = j["text"].get<std::string>();
    n.text_embedding = j.at("text_embedding").get<std::vector<double>>();
    n.text_tokens = detail::columns_from_json(j.at("text_tokens"), "text_tokens");
    n.image_features = detail::columns_from_json(j.at("image_features"), "image_features");
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed node record: ") + e.what(), line_no);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("malformed node record: ") + e.what(), line_no);
  }
}

inline std::vector<std::pair<NodeId, NodeId>> read_edges(std::istream& in) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError("edge line must be 'src<TAB>dst'", no);
    std::string_view sv(line);
    edges.emplace_back(detail::parse_id(sv.substr(0, tab), no),
                       detail::parse_id(sv.substr(tab + 1), no));
  }
  return edges;
}

inline MultimodalGraph load_graph(const std::filesystem::path& nodes_path,
                                  const std::filesystem::path& edges_path) {
  std::ifstream nin(nodes_path);
  if (!nin) throw Error("cannot open nodes file " + nodes_path.string());
  std::vector<NodeRecord> nodes;
  std::string line;
  std::size_t no = 0;
  while (std::getline(nin, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nodes.push_back(parse_node_line(line, no));
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });

  std::ifstream ein(edges_path);
  if (!ein) throw Error("cannot open edges file " + edges_path.string());
  return MultimodalGraph(std::move(nodes), read_edges(ein));
}

inline void save_graph(const MultimodalGraph& g, const std::filesystem::path& nodes_path,
                       const std::filesystem::path& edges_path) {
  std::ofstream nout(nodes_path, std::ios::binary);
  if (!nout) throw Error("cannot write " + nodes_path.string());
  for (const auto& n : g.nodes()) {
    nlohmann::ordered_json j;
    j["id"] = n.id;
    if (!n.text.empty()) j["text"] = n.text;
    j["text_embedding"] = n.text_embedding;
    j["text_tokens"] = detail::columns_to_json(n.text_tokens);
    j["image_features"] = detail::columns_to_json(n.image_features);
    nout << j.dump() << '\n';
  }
  std::ofstream eout(edges_path, std::ios::binary);
  if (!eout) throw Error("cannot write " + edges_path.string());
  for (auto [a, b] : g.edge_list()) eout << a << '\t' << b << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic stochastic-block-model graphs.

/// Nodes are split into contiguous equal-size clusters. Each cluster owns a
/// unit style vector; each node owns a content vector drawn around one of
/// `n_topics` shared topic prototypes (topics are independent of clusters).
/// Image columns are normalize(style_scale*s_c + content_scale*u_i +
/// noise_scale*eta) with eta ~ N(0, I/d). The text embedding is
/// normalize(u_i + text_noise*xi) for a random unit xi; text tokens jitter
/// around it. Text therefore carries content but no style.
struct SyntheticConfig {
  std::size_t n_nodes = 500;
  std::size_t n_clusters = 5;
  double p_in = 0.1;
  double p_out = 0.002;
  std::size_t d = 16;
  std::size_t images_per_node = 4;
  std::size_t text_length = 4;
  double style_scale = 1.0;
  double content_scale = 1.0;
  double noise_scale = 0.2;
  std::size_t n_topics = 10;
  double content_jitter = 0.3;
  double text_noise = 0.6;
  double token_noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_nodes == 0 || n_clusters == 0 || n_clusters > n_nodes)
      throw ConfigError("synthetic: need 1 <= n_clusters <= n_nodes");
    if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0))
      throw ConfigError("synthetic: need 0 <= p_out < p_in <= 1");
    if (style_scale < 0 || content_scale < 0 || noise_scale < 0 || content_jitter < 0 ||
        text_noise < 0 || token_noise < 0)
      throw ConfigError("synthetic: scales must be >= 0");
    if (d == 0 || images_per_node == 0 || text_length == 0 || n_topics == 0)
      throw ConfigError("synthetic: dimensions must be positive");
  }
};

/// Ground truth retained by the generator for evaluation.
struct SyntheticTruth {
  std::vector<std::size_t> cluster;
  std::vector<std::size_t> topic;
  std::vector<Vector> styles;    // per cluster, unit norm
  std::vector<Vector> contents;  // per node, unit norm

  std::vector<NodeId> members(std::size_t c) const {
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < cluster.size(); ++i)
      if (cluster[i] == c) out.push_back(static_cast<NodeId>(i));
    return out;
  }
};

struct SyntheticGraph {
  MultimodalGraph graph;
  SyntheticTruth truth;
};

namespace detail {
inline Vector random_unit(Rng& rng, std::size_t d) {
  Vector v = rng.normal_vector(d);
  normalize_in_place(v);
  return v;
}
}  // namespace detail

inline SyntheticGraph synthesize_graph(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_nodes, d = cfg.d;
  Rng feat_rng(derive_seed(cfg.seed, "synthetic.features"));
  Rng edge_rng(derive_seed(cfg.seed, "synthetic.edges"));

  SyntheticTruth truth;
  truth.cluster.resize(n);
  for (std::size_t i = 0; i < n; ++i) truth.cluster[i] = i * cfg.n_clusters / n;
  for (std::size_t c = 0; c < cfg.n_clusters; ++c)
    truth.styles.push_back(detail::random_unit(feat_rng, d));
  std::vector<Vector> prototypes;
  for (std::size_t t = 0; t < cfg.n_topics; ++t)
    prototypes.push_back(detail::random_unit(feat_rng, d));

  const double eta_sd = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<NodeRecord> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t topic = feat_rng.index(0, cfg.n_topics - 1);
    truth.topic.push_back(topic);
    Vector u = prototypes[topic];
    for (auto& x : u) x += cfg.content_jitter * eta_sd * feat_rng.normal();
    normalize_in_place(u);
    truth.contents.push_back(u);

    NodeRecord& rec = nodes[i];
    rec.id = static_cast<NodeId>(i);
    rec.image_features = Matrix(d, cfg.images_per_node);
    const auto& s = truth.styles[truth.cluster[i]];
    for (std::size_t c = 0; c < cfg.images_per_node; ++c) {
      Vector col(d);
      for (std::size_t r = 0; r < d; ++r)
        col[r] = cfg.style_scale * s[r] + cfg.content_scale * u[r] +
                 cfg.noise_scale * eta_sd * feat_rng.normal();
      normalize_in_place(col);
      rec.image_features.set_col(c, col);
    }

    const Vector xi = detail::random_unit(feat_rng, d);
    rec.text_embedding.resize(d);
    for (std::size_t r = 0; r < d; ++r) rec.text_embedding[r] = u[r] + cfg.text_noise * xi[r];
    normalize_in_place(rec.text_embedding);
    rec.text_tokens = Matrix(d, cfg.text_length);
    for (std::size_t c = 0; c < cfg.text_length; ++c) {
      Vector tok(d);
      for (std::size_t r = 0; r < d; ++r)
        tok[r] = rec.text_embedding[r] + cfg.token_noise * eta_sd * feat_rng.normal();
      rec.text_tokens.set_col(c, tok);
    }
    rec.text = "node " + std::to_string(i) + " topic " + std::to_string(topic);
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = truth.cluster[i] == truth.cluster[j] ? cfg.p_in : cfg.p_out;
      if (edge_rng.uniform() < p)
        edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  return {MultimodalGraph(std::move(nodes), edges), std::move(truth)};
}

inline void save_truth(const SyntheticTruth& t, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["cluster"] = t.cluster;
  j["topic"] = t.topic;
  j["styles"] = t.styles;
  j["contents"] = t.contents;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

inline SyntheticTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    SyntheticTruth t;
    t.cluster = j.at("cluster").get<std::vector<std::size_t>>();
    t.topic = j.at("topic").get<std::vector<std::size_t>>();
    t.styles = j.at("styles").get<std::vector<Vector>>();
    t.contents = j.at("contents").get<std::vector<Vector>>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed truth file: ") + e.what(), 0);
  }
}

/// A dataset directory: nodes.jsonl, edges.tsv and, for synthetic data,
/// truth.json.
struct Dataset {
  MultimodalGraph graph;
  std::optional<SyntheticTruth> truth;
};

inline void save_dataset(const std::filesystem::path& dir, const MultimodalGraph& g,
                         const SyntheticTruth* truth = nullptr) {
  std::filesystem::create_directories(dir);
  save_graph(g, dir / "nodes.jsonl", dir / "edges.tsv");
  if (truth) save_truth(*truth, dir / "truth.json");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds{load_graph(dir / "nodes.jsonl", dir / "edges.tsv"), std::nullopt};
  if (std::filesystem::exists(dir / "truth.json")) {
    ds.truth = load_truth(dir / "truth.json");
    if (ds.truth->cluster.size() != ds.graph.size())
      throw Error("truth.json node count does not match the graph");
  }
  return ds;
}

}  // namespace ig2i
