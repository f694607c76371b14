#include "fedbook/graph.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "fedbook/errors.h"
#include "fedbook/text_format.h"

namespace fedbook {

std::string ToString(LabelLevel level) {
  switch (level) {
    case LabelLevel::kNode: return "node";
    case LabelLevel::kEdge: return "edge";
    case LabelLevel::kGraph: return "graph";
  }
  return "node";
}

LabelLevel ParseLabelLevel(const std::string& text) {
  if (text == "node") return LabelLevel::kNode;
  if (text == "edge") return LabelLevel::kEdge;
  if (text == "graph") return LabelLevel::kGraph;
  throw ConfigError("unknown label level '" + text + "'");
}

void TextAttributedGraph::Validate() const {
  if (node_count == 0) throw ValidationError("graph has no nodes");
  if (node_features.rank() != 2 || node_features.rows() != node_count) {
    throw ValidationError("node features " + ShapeToString(node_features.shape()) +
                          " do not match node_count " + std::to_string(node_count));
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].src >= node_count || edges[i].dst >= node_count) {
      throw ValidationError("edge " + std::to_string(i) + " (" +
                            std::to_string(edges[i].src) + ", " +
                            std::to_string(edges[i].dst) + ") references a node >= " +
                            std::to_string(node_count));
    }
  }
  if (edge_features) {
    if (edge_features->rank() != 2 || edge_features->rows() != edges.size()) {
      throw ValidationError("edge feature rows do not match edge count");
    }
    if (edge_features->cols() != feature_dim()) {
      throw ValidationError("edge feature dimension differs from node feature dimension");
    }
  }
  switch (level) {
    case LabelLevel::kNode:
      if (node_labels.size() != node_count) throw ValidationError("node label count mismatch");
      break;
    case LabelLevel::kEdge:
      if (edge_labels.size() != edges.size()) throw ValidationError("edge label count mismatch");
      break;
    case LabelLevel::kGraph:
      if (graph_labels.empty()) throw ValidationError("graph label missing");
      if (!multilabel && graph_labels.size() != 1) {
        throw ValidationError("single-label graph needs exactly one label");
      }
      if (multilabel) {
        for (auto b : graph_labels)
          if (b != 0 && b != 1) throw ValidationError("multi-label bits must be 0 or 1");
      }
      break;
  }
}

Tensor DenseAdjacency(const TextAttributedGraph& g) {
  const std::size_t n = g.node_count;
  Tensor a({n, n});
  for (const Edge& e : g.edges) {
    a(e.src, e.dst) = 1.0;
    a(e.dst, e.src) = 1.0;
  }
  return a;
}

namespace {

// Undirected incidence: (neighbor, edge index) per node. A self loop appears
// once.
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> Incidence(
    const TextAttributedGraph& g) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> inc(g.node_count);
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const Edge& e = g.edges[i];
    inc[e.dst].push_back({e.src, i});
    if (e.src != e.dst) inc[e.src].push_back({e.dst, i});
  }
  return inc;
}

}  // namespace

Tensor NeighborMeanOperator(const TextAttributedGraph& g) {
  const std::size_t n = g.node_count;
  Tensor p({n, n});
  const auto inc = Incidence(g);
  for (std::size_t v = 0; v < n; ++v) {
    if (inc[v].empty()) continue;
    const double w = 1.0 / static_cast<double>(inc[v].size());
    for (const auto& [u, _] : inc[v]) p(v, u) += w;
  }
  return p;
}

Tensor IncidentEdgeFeatureMean(const TextAttributedGraph& g) {
  if (!g.edge_features) return Tensor();
  const std::size_t n = g.node_count, d = g.edge_features->cols();
  Tensor out({n, d});
  const auto inc = Incidence(g);
  for (std::size_t v = 0; v < n; ++v) {
    if (inc[v].empty()) continue;
    const double w = 1.0 / static_cast<double>(inc[v].size());
    for (const auto& [_, ei] : inc[v])
      for (std::size_t c = 0; c < d; ++c) out(v, c) += w * (*g.edge_features)(ei, c);
  }
  return out;
}

TextAttributedGraph InducedSubgraph(const TextAttributedGraph& g,
                                    const std::vector<std::size_t>& nodes) {
  TextAttributedGraph sub;
  sub.level = g.level;
  sub.multilabel = g.multilabel;
  sub.graph_labels = g.graph_labels;
  sub.node_count = nodes.size();
  std::unordered_map<std::size_t, std::size_t> local;
  for (std::size_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], i);

  const std::size_t d = g.feature_dim();
  sub.node_features = Tensor({nodes.size(), d});
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto src = g.node_features.row(nodes[i]);
    std::copy(src.begin(), src.end(), sub.node_features.row(i).begin());
    if (!g.node_labels.empty()) sub.node_labels.push_back(g.node_labels[nodes[i]]);
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    auto s = local.find(g.edges[i].src);
    auto t = local.find(g.edges[i].dst);
    if (s == local.end() || t == local.end()) continue;
    sub.edges.push_back({s->second, t->second});
    kept.push_back(i);
    if (!g.edge_labels.empty()) sub.edge_labels.push_back(g.edge_labels[i]);
  }
  if (g.edge_features) {
    Tensor ef({kept.size(), g.edge_features->cols()});
    for (std::size_t k = 0; k < kept.size(); ++k) {
      auto src = g.edge_features->row(kept[k]);
      std::copy(src.begin(), src.end(), ef.row(k).begin());
    }
    sub.edge_features = std::move(ef);
  }
  return sub;
}

std::size_t InstanceCount(const std::vector<TextAttributedGraph>& graphs) {
  std::size_t m = 0;
  for (const auto& g : graphs) {
    switch (g.level) {
      case LabelLevel::kNode: m += g.node_count; break;
      case LabelLevel::kEdge: m += g.edges.size(); break;
      case LabelLevel::kGraph: m += 1; break;
    }
  }
  return m;
}

namespace {

std::vector<std::string_view> SplitWords(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T ParseNumber(std::string_view word, std::size_t line_no) {
  T v{};
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
  if (ec != std::errc() || ptr != word.data() + word.size()) {
    throw ParseError(line_no, "bad number '" + std::string(word) + "'");
  }
  return v;
}

}  // namespace

TextAttributedGraph ParseGraph(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  LabelLevel level = LabelLevel::kNode;
  bool multilabel = false;
  bool saw_graph_line = false;

  struct NodeRec {
    std::vector<double> features;
    std::int64_t label = 0;
  };
  std::vector<std::pair<std::size_t, NodeRec>> node_recs;
  std::vector<Edge> edges;
  std::vector<double> edge_feats;
  std::optional<bool> edges_have_features;
  std::vector<std::int64_t> edge_labels, graph_labels;

  while (std::getline(in, line)) {
    ++line_no;
    const auto words = SplitWords(line);
    if (words.empty()) continue;
    const std::string_view kind = words[0];
    if (kind == "#tag") {
      for (std::size_t i = 1; i < words.size(); ++i) {
        const auto eq = words[i].find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "bad header field");
        const std::string key(words[i].substr(0, eq));
        const std::string_view value = words[i].substr(eq + 1);
        if (key == "d") {
          dim = ParseNumber<std::size_t>(value, line_no);
        } else if (key == "level") {
          try {
            level = ParseLabelLevel(std::string(value));
          } catch (const ConfigError& e) {
            throw ParseError(line_no, e.what());
          }
        } else if (key == "multilabel") {
          multilabel = ParseNumber<int>(value, line_no) != 0;
        } else {
          throw ParseError(line_no, "unknown header field '" + key + "'");
        }
      }
      continue;
    }
    if (kind[0] == '#') continue;
    if (!dim) throw ParseError(line_no, "record before '#tag' header");
    const std::size_t d = *dim;
    const std::size_t extra = words.size() - 1;
    if (kind == "N") {
      const bool labeled = level == LabelLevel::kNode;
      if (extra != 1 + d + (labeled ? 1 : 0)) {
        throw ParseError(line_no, "node record needs id, " + std::to_string(d) +
                                      " features" + (labeled ? " and a label" : ""));
      }
      NodeRec rec;
      const auto id = ParseNumber<std::size_t>(words[1], line_no);
      for (std::size_t k = 0; k < d; ++k)
        rec.features.push_back(ParseNumber<double>(words[2 + k], line_no));
      if (labeled) rec.label = ParseNumber<std::int64_t>(words[2 + d], line_no);
      node_recs.emplace_back(id, std::move(rec));
    } else if (kind == "E") {
      if (extra < 2) throw ParseError(line_no, "edge record needs src and dst");
      const bool labeled = level == LabelLevel::kEdge;
      const std::size_t rest = extra - 2 - (labeled ? 1 : 0);
      if (extra < 2 + (labeled ? 1u : 0u) || (rest != 0 && rest != d)) {
        throw ParseError(line_no, "edge record has an unexpected field count");
      }
      const bool has_feat = rest == d && d > 0;
      if (edges_have_features && *edges_have_features != has_feat) {
        throw ParseError(line_no, "edges mix records with and without features");
      }
      edges_have_features = has_feat;
      edges.push_back({ParseNumber<std::size_t>(words[1], line_no),
                       ParseNumber<std::size_t>(words[2], line_no)});
      for (std::size_t k = 0; k < rest; ++k)
        edge_feats.push_back(ParseNumber<double>(words[3 + k], line_no));
      if (labeled) edge_labels.push_back(ParseNumber<std::int64_t>(words.back(), line_no));
    } else if (kind == "G") {
      if (saw_graph_line) throw ParseError(line_no, "duplicate graph label record");
      if (extra == 0) throw ParseError(line_no, "graph label record is empty");
      saw_graph_line = true;
      for (std::size_t k = 1; k < words.size(); ++k)
        graph_labels.push_back(ParseNumber<std::int64_t>(words[k], line_no));
    } else {
      throw ParseError(line_no, "unknown record type '" + std::string(kind) + "'");
    }
  }
  if (!dim) throw ParseError(line_no, "missing '#tag' header");

  TextAttributedGraph g;
  g.level = level;
  g.node_count = node_recs.size();
  g.multilabel = multilabel || graph_labels.size() > 1;
  std::vector<double> feats(g.node_count * *dim);
  std::vector<char> seen(g.node_count, 0);
  if (level == LabelLevel::kNode) g.node_labels.assign(g.node_count, 0);
  for (auto& [id, rec] : node_recs) {
    if (id >= g.node_count || seen[id]) {
      throw ValidationError("node ids must be unique and cover 0.." +
                            std::to_string(g.node_count) + " (bad id " +
                            std::to_string(id) + ")");
    }
    seen[id] = 1;
    std::copy(rec.features.begin(), rec.features.end(), feats.begin() + id * *dim);
    if (level == LabelLevel::kNode) g.node_labels[id] = rec.label;
  }
  g.node_features = Tensor({g.node_count, *dim}, std::move(feats));
  g.edges = std::move(edges);
  if (edges_have_features && *edges_have_features) {
    g.edge_features = Tensor({g.edges.size(), *dim}, std::move(edge_feats));
  }
  g.edge_labels = std::move(edge_labels);
  g.graph_labels = std::move(graph_labels);
  g.Validate();
  return g;
}

TextAttributedGraph LoadGraph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file " + path.string());
  return ParseGraph(in);
}

void WriteGraph(const TextAttributedGraph& g, std::ostream& out) {
  g.Validate();
  const std::size_t d = g.feature_dim();
  out << "#tag d=" << d << " level=" << ToString(g.level);
  if (g.multilabel) out << " multilabel=1";
  out << '\n';
  for (std::size_t v = 0; v < g.node_count; ++v) {
    out << "N " << v;
    for (double f : g.node_features.row(v)) out << ' ' << FormatDouble(f);
    if (g.level == LabelLevel::kNode) out << ' ' << g.node_labels[v];
    out << '\n';
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    out << "E " << g.edges[i].src << ' ' << g.edges[i].dst;
    if (g.edge_features)
      for (double f : g.edge_features->row(i)) out << ' ' << FormatDouble(f);
    if (g.level == LabelLevel::kEdge) out << ' ' << g.edge_labels[i];
    out << '\n';
  }
  if (g.level == LabelLevel::kGraph) {
    out << 'G';
    for (auto l : g.graph_labels) out << ' ' << l;
    out << '\n';
  }
}

void SaveGraph(const TextAttributedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file " + path.string());
  WriteGraph(g, out);
}

}  // namespace fedbook
