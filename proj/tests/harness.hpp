#pragma once

// The synthetic benchmark used by the slow experiment tests and the
// acceptance run: default SyntheticConfig, 100 masked test nodes, models
// trained for 2000 steps.

#include <vector>

#include <ig2i/ig2i.hpp>

namespace ig2i::testing {

struct Bench {
  SyntheticGraph data;
  std::vector<NodeId> test_ids;
  SamplerConfig sampler;  // exclude = test_ids
};

inline Bench make_bench(std::size_t n_test = 100, std::uint64_t split_seed = 0) {
  Bench b{synthesize_graph(SyntheticConfig{}), {}, {}};
  b.test_ids = choose_test_nodes(b.data.graph.size(), n_test, split_seed);
  b.sampler.exclude = {b.test_ids.begin(), b.test_ids.end()};
  return b;
}

struct Trained {
  Model model;
  TrainResult result;
};

inline Trained train_on(const Bench& b, GraphEncoderKind encoder, std::uint64_t seed,
                        std::size_t steps = 2000) {
  ModelConfig mc;
  mc.seed = seed;
  mc.encoder = encoder;
  Trained t{init_model(mc), {}};
  TrainConfig tc;
  tc.steps = steps;
  tc.seed = seed;
  t.result = train(t.model, b.data.graph, b.sampler, tc);
  return t;
}

/// Mean of the last `window` losses over the mean of the first `window`.
inline double loss_ratio(const std::vector<double>& trace, std::size_t window = 100) {
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    first += trace[i];
    last += trace[trace.size() - 1 - i];
  }
  return last / first;
}

/// For every test node, one sample conditioned on its own sampled
/// neighborhood; a win is when the sample is closer (cosine) to the node's
/// cluster style than to every other cluster style.
inline std::size_t style_wins(const Model& m, const Bench& b, double s_text, double s_graph) {
  const auto& truth = b.data.truth;
  std::size_t wins = 0;
  for (std::size_t i = 0; i < b.test_ids.size(); ++i) {
    const NodeId target = b.test_ids[i];
    GuidanceSpec spec{s_text, {{sample_neighbors(b.data.graph, target, b.sampler), s_graph}}};
    const Vector z = sample(m, b.data.graph.node(target).text_tokens, spec, derive_seed(i, target));
    const std::size_t c = truth.cluster[target];
    const double own = cosine(z, truth.styles[c]);
    bool win = true;
    for (std::size_t o = 0; o < truth.styles.size(); ++o)
      if (o != c && cosine(z, truth.styles[o]) >= own) win = false;
    wins += win;
  }
  return wins;
}

/// Probe targets: every node that is neither masked nor a test node.
inline std::vector<NodeId> training_nodes(const Bench& b) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < b.data.graph.size(); ++i)
    if (!b.sampler.exclude.count(static_cast<NodeId>(i))) out.push_back(static_cast<NodeId>(i));
  return out;
}

}  // namespace ig2i::testing
