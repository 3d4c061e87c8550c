#pragma once

#include <vector>

#include "ig2i/error.hpp"
#include "ig2i/matrix.hpp"
#include "ig2i/sampling.hpp"

namespace ig2i {

/// Noise predictions entering graph classifier-free guidance:
/// eps(z_t, 0, 0), eps(z_t, 0, c_T) and eps(z_t, c_G^(k), c_T) per graph
/// condition k.
struct ScoreTriple {
  Vector eps_uncond;
  Vector eps_text;
  std::vector<Vector> eps_graph;
};

struct GraphTerm {
  GraphCondition condition;
  double scale = 1.0;
};

struct GuidanceSpec {
  double s_text = 7.5;
  std::vector<GraphTerm> graph_terms;

  void validate() const {
    if (!(s_text >= 0.0) || !std::isfinite(s_text))
      throw ConfigError("guidance: s_text must be finite and >= 0");
    for (const auto& g : graph_terms)
      if (!std::isfinite(g.scale)) throw ConfigError("guidance: graph scales must be finite");
  }
};

namespace detail {
inline void check_lengths(const ScoreTriple& s) {
  const std::size_t n = s.eps_uncond.size();
  if (s.eps_text.size() != n) throw DimensionError("score length mismatch");
  for (const auto& g : s.eps_graph)
    if (g.size() != n) throw DimensionError("score length mismatch");
}
}  // namespace detail

/// eps_u + s_T (eps_t - eps_u) + sum_k s_G^(k) (eps_g^(k) - eps_t).
inline Vector compose_multi(const ScoreTriple& s, double s_text,
                            const std::vector<double>& graph_scales) {
  detail::check_lengths(s);
  if (graph_scales.size() != s.eps_graph.size())
    throw DimensionError("graph scale count does not match graph predictions");
  Vector out(s.eps_uncond.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = s.eps_uncond[i] + s_text * (s.eps_text[i] - s.eps_uncond[i]);
    for (std::size_t k = 0; k < graph_scales.size(); ++k)
      v += graph_scales[k] * (s.eps_graph[k][i] - s.eps_text[i]);
    out[i] = v;
  }
  return out;
}

inline Vector compose_multi(const ScoreTriple& s, const GuidanceSpec& spec) {
  std::vector<double> scales;
  for (const auto& g : spec.graph_terms) scales.push_back(g.scale);
  return compose_multi(s, spec.s_text, scales);
}

/// Single graph condition: eps_u + s_T (eps_t - eps_u) + s_G (eps_g - eps_t).
inline Vector compose_single(const ScoreTriple& s, double s_text, double s_graph) {
  if (s.eps_graph.size() != 1) throw DimensionError("compose_single needs exactly one graph term");
  detail::check_lengths(s);
  Vector out(s.eps_uncond.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = s.eps_uncond[i] + s_text * (s.eps_text[i] - s.eps_uncond[i]) +
             s_graph * (s.eps_graph[0][i] - s.eps_text[i]);
  return out;
}

}  // namespace ig2i
