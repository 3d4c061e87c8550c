#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <ig2i/ig2i.hpp>

namespace ig2i::testing {

/// Node record with every embedding filled from `rng`; d rows, m images,
/// l text tokens.
inline NodeRecord random_node(NodeId id, std::size_t d, std::size_t m, std::size_t l, Rng& rng) {
  NodeRecord n;
  n.id = id;
  n.text = "node " + std::to_string(id);
  n.text_embedding = rng.normal_vector(d);
  n.text_tokens = Matrix(d, l, rng.normal_vector(d * l));
  n.image_features = Matrix(d, m, rng.normal_vector(d * m));
  return n;
}

inline MultimodalGraph random_graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                    std::uint64_t seed = 1, std::size_t d = 4, std::size_t m = 2) {
  Rng rng(seed);
  std::vector<NodeRecord> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back(random_node(NodeId(i), d, m, 2, rng));
  return MultimodalGraph(std::move(nodes), edges);
}

/// Erdos-Renyi edge list with edge probability p.
inline std::vector<std::pair<NodeId, NodeId>> random_edges(std::size_t n, double p, Rng& rng) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) e.emplace_back(NodeId(i), NodeId(j));
  return e;
}

inline NormalizedAdjacency adjacency_of(std::size_t n,
                                        const std::vector<std::pair<NodeId, NodeId>>& edges) {
  return normalize_adjacency(random_graph(n, edges));
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ig2i_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

// ---------------------------------------------------------------------------
// Central finite differences against the tape.

struct GradProbe {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning finite-difference noise into a huge ratio.
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

using ScalarLoss = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of a scalar loss with central
/// differences at `probes_per_param` random entries of every parameter whose
/// name starts with one of `prefixes` (all parameters if empty). Parameters
/// the loss does not touch are skipped.
inline std::vector<GradProbe> gradcheck(Parameters& params, const ScalarLoss& loss,
                                        std::size_t probes_per_param, std::uint64_t seed,
                                        double h = 1e-5,
                                        const std::vector<std::string>& prefixes = {}) {
  Tape tape(params);
  Var out = loss(tape);
  tape.backward(out, Matrix(1, 1, 1.0));
  const Gradients grads = tape.gradients();
  const auto eval = [&] {
    Tape t(params, false);
    return t.value(loss(t))(0, 0);
  };
  // Structurally zero gradients (e.g. key biases under softmax) difference to
  // pure roundoff, which grows with the loss; scale the floor to match.
  const double floor = 1e-6 * std::max(1.0, std::abs(tape.value(out)(0, 0)));
  Rng rng(seed);
  std::vector<GradProbe> out_probes;
  for (ParamId p = 0; p < params.size(); ++p) {
    const auto& name = params.name(p);
    if (!prefixes.empty() &&
        std::none_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& pre) { return name.rfind(pre, 0) == 0; }))
      continue;
    Matrix& w = params.mutable_value(p);
    for (std::size_t k = 0; k < probes_per_param; ++k) {
      const std::size_t i = rng.index(0, w.size() - 1);
      const double saved = w[i];
      w[i] = saved + h;
      const double up = eval();
      w[i] = saved - h;
      const double down = eval();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[p][i];
      out_probes.push_back({name, i, analytic, numeric, relative_error(analytic, numeric, floor)});
    }
  }
  return out_probes;
}

inline double worst(const std::vector<GradProbe>& probes) {
  double m = 0.0;
  for (const auto& p : probes) m = std::max(m, p.rel_error);
  return m;
}

/// Gives every zero-initialized tensor random values so that gradients flow
/// through all paths (an untrained network has zero output projections).
inline void randomize(Parameters& p, std::uint64_t seed, double sd = 0.3) {
  Rng rng(seed);
  for (ParamId i = 0; i < p.size(); ++i)
    for (auto& v : p.mutable_value(i).values()) v += sd * rng.normal();
}

struct CommandResult {
  int exit_code = -1;
  std::string out;  // stdout only; stderr goes to the test log
};

/// Runs a shell command and captures its stdout.
inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace ig2i::testing
