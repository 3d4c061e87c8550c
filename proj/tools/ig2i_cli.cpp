// ig2i: command-line front end for the graph-conditioned generation toolkit.
//
// Payloads go to stdout (or --out where a subcommand writes files), progress
// goes to stderr. Exit 2 on usage errors, 1 on runtime errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <ig2i/ig2i.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ig2i;

namespace {

struct UsageError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Shared options and effective configuration

struct Common {
  std::string config_path;
  std::vector<std::string> sets;  // --set key=value
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key = value config file");
  sub->add_option("--set", c.sets, "override a config key, e.g. --set train.steps=500");
  sub->add_option("--seed", c.seed, "global seed; module seeds are derived from it");
  sub->add_option("--workers", c.workers, "worker threads (1 is the determinism reference)")
      ->check(CLI::PositiveNumber);
}

/// File values, then --set overrides, then the named flag overrides in
/// `flags` (only those the user actually passed).
KeyValues effective_config(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags = {}) {
  KeyValues kv;
  if (!c.config_path.empty()) kv = KeyValues::load(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) kv.set(k, v);
  if (c.seed) kv.set("seed", std::to_string(*c.seed));
  return kv;
}

std::uint64_t global_seed(const KeyValues& kv) { return kv.get("seed", std::uint64_t{0}); }

/// Fixed splitting rule: each module seed is derive_seed(global, module name).
std::uint64_t module_seed(const KeyValues& kv, const char* module) {
  return derive_seed(global_seed(kv), module);
}

template <class T>
void flag(std::vector<std::pair<std::string, std::string>>& out, const char* key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_floating_point_v<T>)
    out.emplace_back(key, KeyValues::format_double(*v));
  else if constexpr (std::is_same_v<T, std::string>)
    out.emplace_back(key, *v);
  else
    out.emplace_back(key, std::to_string(*v));
}

// data.* and the global seed are run bookkeeping, not module settings.
void warn_unused(const KeyValues& kv) {
  for (const auto& k : kv.unused_keys())
    if (k != "seed" && k.rfind("data.", 0) != 0) std::cerr << "warning: unused config key '" << k << "'\n";
}

json config_json(const KeyValues& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.entries()) j[k] = v;
  return j;
}

/// "# key = value" header for line-oriented payloads.
void echo_config(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv.entries()) out << "# " << k << " = " << v << '\n';
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string join_ids(const std::vector<NodeId>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s;
}

std::vector<NodeId> parse_ids(const std::string& s) {
  std::vector<NodeId> out;
  if (s.empty()) return out;
  for (double v : parse_number_list(s)) {
    if (v < 0 || v != static_cast<double>(static_cast<NodeId>(v))) throw ConfigError("bad node id in '" + s + "'");
    out.push_back(static_cast<NodeId>(v));
  }
  return out;
}

void check_target(const MultimodalGraph& g, NodeId target) {
  if (target >= g.size())
    throw UsageError("--target " + std::to_string(target) + " is out of range (graph has " +
                     std::to_string(g.size()) + " nodes)");
}

// ---------------------------------------------------------------------------
// Checkpoint-backed run state

struct Run {
  Checkpoint ck;
  Dataset data;
  SamplerConfig sampler;
  std::vector<NodeId> test_ids;
};

Run open_run(const std::string& ckpt, const std::string& graph_override, const KeyValues& overrides) {
  Run r{load_checkpoint(ckpt), {}, {}, {}};
  KeyValues& kv = r.ck.config;
  kv.merge(overrides);
  const std::string graph = graph_override.empty() ? kv.get("data.graph", std::string()) : graph_override;
  if (graph.empty()) throw UsageError("checkpoint does not record its graph; pass --graph");
  kv.set("data.graph", graph);
  r.data = load_dataset(graph);
  if (r.data.graph.dim() != r.ck.model.config.d)
    throw Error("graph dimension " + std::to_string(r.data.graph.dim()) + " does not match model d " +
                std::to_string(r.ck.model.config.d));
  r.sampler = read_sampler_config(kv);
  r.test_ids = parse_ids(kv.get("data.test_ids", std::string()));
  for (NodeId id : r.test_ids) {
    if (id >= r.data.graph.size()) throw Error("checkpoint test ids do not fit the graph");
    r.sampler.exclude.insert(id);
  }
  r.sampler.validate();
  return r;
}

const SyntheticTruth& need_truth(const Run& r, const char* what) {
  if (!r.data.truth) throw UsageError(std::string(what) + " needs a synthetic graph with truth.json");
  return *r.data.truth;
}

std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = base + i;
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenSynthArgs {
  Common common;
  std::string out;
  std::optional<std::size_t> nodes, clusters, d;
};

int cmd_gen_synth(const GenSynthArgs& a) {
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "synth.n_nodes", a.nodes);
  flag(flags, "synth.n_clusters", a.clusters);
  flag(flags, "synth.d", a.d);
  KeyValues kv = effective_config(a.common, flags);
  if (!kv.has("synth.seed")) kv.set("synth.seed", std::to_string(module_seed(kv, "synth")));
  const auto cfg = read_synthetic_config(kv);
  cfg.validate();
  warn_unused(kv);
  write_config(kv, cfg);

  std::cerr << "generating " << cfg.n_nodes << " nodes in " << cfg.n_clusters << " clusters\n";
  const auto sg = synthesize_graph(cfg);
  save_dataset(a.out, sg.graph, &sg.truth);
  {
    std::ofstream cfg_out(fs::path(a.out) / "config.txt", std::ios::binary);
    cfg_out << kv.to_text();
  }
  json j;
  j["out"] = a.out;
  j["nodes"] = sg.graph.size();
  j["edges"] = sg.graph.adjacency().nnz() / 2;
  j["config"] = config_json(kv);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct IngestArgs {
  Common common;
  std::string graph, nodes, edges, out;
};

int cmd_ingest(const IngestArgs& a) {
  KeyValues kv = effective_config(a.common);
  Dataset ds;
  if (!a.graph.empty()) {
    ds = load_dataset(a.graph);
    kv.set("data.graph", a.graph);
  } else {
    if (a.nodes.empty() || a.edges.empty()) throw UsageError("ingest needs --graph or both --nodes and --edges");
    ds.graph = load_graph(a.nodes, a.edges);
    kv.set("data.nodes", a.nodes);
    kv.set("data.edges", a.edges);
  }
  warn_unused(kv);
  const auto& g = ds.graph;
  if (!a.out.empty()) {
    save_dataset(a.out, g, ds.truth ? &*ds.truth : nullptr);
    kv.set("data.out", a.out);
  }
  std::size_t isolated = 0, max_degree = 0;
  for (auto deg : g.degrees()) {
    isolated += deg == 0;
    max_degree = std::max(max_degree, deg);
  }
  json j;
  j["nodes"] = g.size();
  j["edges"] = g.adjacency().nnz() / 2;
  j["d"] = g.dim();
  j["images_per_node"] = g.images_per_node();
  j["text_length"] = g.size() ? g.node(0).text_tokens.cols() : 0;
  j["isolated_nodes"] = isolated;
  j["max_degree"] = max_degree;
  j["has_truth"] = ds.truth.has_value();
  j["config"] = config_json(kv);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct PprArgs {
  Common common;
  std::string graph;
  NodeId target = 0;
  std::optional<double> beta;
  std::size_t topk = 0;
};

int cmd_ppr(const PprArgs& a) {
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "ppr.beta", a.beta);
  KeyValues kv = effective_config(a.common, flags);
  kv.set("data.graph", a.graph);
  const auto sampler = read_sampler_config(kv);
  sampler.ppr.validate();
  warn_unused(kv);
  write_config(kv, sampler);
  const auto ds = load_dataset(a.graph);
  check_target(ds.graph, a.target);
  const auto ppr = compute_ppr(normalize_adjacency(ds.graph), a.target, sampler.ppr);
  if (!ppr.converged) std::cerr << "warning: PPR did not converge in " << ppr.iterations << " iterations\n";

  std::vector<NodeId> order(ppr.scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<NodeId>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId x, NodeId y) { return ppr.scores[x] > ppr.scores[y]; });
  const std::size_t n = a.topk ? std::min(a.topk, order.size()) : order.size();
  echo_config(std::cout, kv);
  for (std::size_t i = 0; i < n; ++i) std::cout << order[i] << ' ' << fixed6(ppr.scores[order[i]]) << '\n';
  return 0;
}

json condition_json(const GraphCondition& c) {
  json j;
  j["target"] = c.target;
  j["neighbors"] = json::array();
  for (std::size_t i = 0; i < c.neighbor_ids.size(); ++i)
    j["neighbors"].push_back({{"id", c.neighbor_ids[i]}, {"ppr", c.ppr[i]}, {"sim", c.sim[i]}});
  return j;
}

struct SampleArgs {
  Common common;
  std::string graph;
  NodeId target = 0;
  std::optional<std::size_t> k_ppr, k;
  std::optional<std::string> sim;
  std::optional<double> beta;
  std::string exclude;
};

int cmd_sample_neighbors(const SampleArgs& a) {
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "sampler.k_ppr", a.k_ppr);
  flag(flags, "sampler.k", a.k);
  flag(flags, "sampler.similarity", a.sim);
  flag(flags, "ppr.beta", a.beta);
  KeyValues kv = effective_config(a.common, flags);
  kv.set("data.graph", a.graph);
  auto sampler = read_sampler_config(kv);
  for (NodeId id : parse_ids(a.exclude)) sampler.exclude.insert(id);
  sampler.validate();
  warn_unused(kv);
  write_config(kv, sampler);
  if (!a.exclude.empty()) kv.set("sampler.exclude", a.exclude);
  const auto ds = load_dataset(a.graph);
  check_target(ds.graph, a.target);
  json j = condition_json(sample_neighbors(ds.graph, a.target, sampler));
  j["config"] = config_json(kv);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct TrainArgs {
  Common common;
  std::string graph, out;
  std::optional<std::size_t> steps, batch_size, test_nodes;
  std::optional<double> lr;
  std::optional<std::string> encoder, optimizer;
};

int cmd_train(const TrainArgs& a) {
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "train.steps", a.steps);
  flag(flags, "train.batch_size", a.batch_size);
  flag(flags, "train.learning_rate", a.lr);
  flag(flags, "train.optimizer", a.optimizer);
  flag(flags, "model.graph_encoder", a.encoder);
  flag(flags, "data.test_nodes", a.test_nodes);
  KeyValues kv = effective_config(a.common, flags);
  kv.set("data.graph", a.graph);
  const auto ds = load_dataset(a.graph);
  if (!kv.has("model.d")) kv.set("model.d", std::to_string(ds.graph.dim()));
  kv.set("model.seed", std::to_string(module_seed(kv, "model")));
  kv.set("train.seed", std::to_string(module_seed(kv, "train")));

  const auto mc = ModelConfig::read(kv);
  auto tc = TrainConfig::read(kv);
  tc.workers = a.common.workers;
  auto sampler = read_sampler_config(kv);
  const std::size_t n_test = kv.get_size("data.test_nodes", std::min<std::size_t>(100, ds.graph.size() / 5));
  const std::uint64_t split_seed = kv.get("data.split_seed", std::uint64_t{0});
  mc.validate();
  tc.validate();
  sampler.validate();
  warn_unused(kv);

  const auto test_ids = n_test ? choose_test_nodes(ds.graph.size(), n_test, split_seed) : std::vector<NodeId>{};
  sampler.exclude.insert(test_ids.begin(), test_ids.end());
  mc.write(kv);
  tc.write(kv);
  write_config(kv, sampler);
  kv.set("data.test_nodes", std::to_string(n_test));
  kv.set("data.split_seed", std::to_string(split_seed));
  kv.set("data.test_ids", join_ids(test_ids));

  auto model = init_model(mc);
  const std::size_t total = tc.steps;
  const auto result = train(model, ds.graph, sampler, tc, [&](std::size_t step, double loss) {
    if ((step + 1) % 100 == 0 || step + 1 == total)
      std::cerr << "step " << step + 1 << "/" << total << " loss " << fixed6(loss) << '\n';
  });
  save_checkpoint(a.out, model, kv);

  const auto& trace = result.loss_trace;
  const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(100, trace.size() / 2));
  const auto mean_of = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + window; ++i) s += trace[i];
    return s / static_cast<double>(window);
  };
  json j;
  j["checkpoint"] = a.out;
  j["steps"] = trace.size();
  j["train_nodes"] = result.train_nodes;
  j["initial_loss"] = mean_of(0);
  j["final_loss"] = mean_of(trace.size() - window);
  json every = json::array();
  for (std::size_t i = 0; i < trace.size(); i += 100) every.push_back(trace[i]);
  j["loss_every_100"] = every;
  j["config"] = config_json(kv);
  std::cout << j.dump(2) << '\n';
  return 0;
}

/// One --graph-cond term: "c<cluster>:<scale>" or "<id>,<id>,...:<scale>".
GraphTerm parse_graph_cond(const std::string& spec, const Run& r, NodeId target) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw UsageError("--graph-cond expects <cluster-or-nodeset>:<scale>, got '" + spec + "'");
  const std::string who = spec.substr(0, colon);
  const auto scale = parse_number_list(spec.substr(colon + 1));
  if (scale.size() != 1) throw UsageError("--graph-cond: bad scale in '" + spec + "'");
  std::vector<NodeId> members;
  if (who[0] == 'c') {
    const auto& truth = need_truth(r, "a cluster condition");
    const auto c = parse_ids(who.substr(1));
    if (c.size() != 1 || c[0] >= truth.styles.size()) throw UsageError("--graph-cond: bad cluster in '" + spec + "'");
    for (NodeId id : truth.members(c[0]))
      if (!r.sampler.exclude.count(id) && id != target) members.push_back(id);
  } else {
    members = parse_ids(who);
    for (NodeId id : members) check_target(r.data.graph, id);
  }
  if (members.empty()) throw UsageError("--graph-cond '" + spec + "' selects no usable nodes");
  const auto& text = r.data.graph.node(target).text_embedding;
  return {sample_virtual_neighbors(r.data.graph, members, text, r.sampler), scale[0]};
}

struct GenerateArgs {
  Common common;
  std::string ckpt, graph;
  NodeId target = 0;
  double s_text = 7.5, s_graph = 1.5;
  std::optional<double> s_graph2;
  std::optional<std::size_t> cluster2;
  std::vector<std::string> graph_conds;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.s_graph2.has_value() != a.cluster2.has_value())
    throw UsageError("--s-graph2 and --cluster2 go together");
  Run r = open_run(a.ckpt, a.graph, effective_config(a.common));
  check_target(r.data.graph, a.target);
  KeyValues& kv = r.ck.config;
  kv.set("generate.target", std::to_string(a.target));
  kv.set("generate.s_text", KeyValues::format_double(a.s_text));
  kv.set("generate.s_graph", KeyValues::format_double(a.s_graph));

  GuidanceSpec spec{a.s_text, {}};
  spec.graph_terms.push_back({sample_neighbors(r.data.graph, a.target, r.sampler), a.s_graph});
  std::vector<std::string> sources{"neighborhood"};
  if (a.cluster2) {
    const std::string c = "c" + std::to_string(*a.cluster2) + ":" + KeyValues::format_double(*a.s_graph2);
    spec.graph_terms.push_back(parse_graph_cond(c, r, a.target));
    sources.push_back("c" + std::to_string(*a.cluster2));
    kv.set("generate.cluster2", std::to_string(*a.cluster2));
    kv.set("generate.s_graph2", KeyValues::format_double(*a.s_graph2));
  }
  for (std::size_t i = 0; i < a.graph_conds.size(); ++i) {
    spec.graph_terms.push_back(parse_graph_cond(a.graph_conds[i], r, a.target));
    sources.push_back(a.graph_conds[i].substr(0, a.graph_conds[i].rfind(':')));
    kv.set("generate.graph_cond." + std::to_string(i), a.graph_conds[i]);
  }
  const std::uint64_t seed = global_seed(kv);
  const Vector z = sample(r.ck.model, r.data.graph.node(a.target).text_tokens, spec, derive_seed(seed, a.target));

  json j;
  j["target"] = a.target;
  j["latent"] = z;
  j["conditions"] = json::array();
  for (std::size_t i = 0; i < spec.graph_terms.size(); ++i) {
    json c;
    c["source"] = sources[i];
    c["scale"] = spec.graph_terms[i].scale;
    c["neighbors"] = spec.graph_terms[i].condition.neighbor_ids;
    j["conditions"].push_back(c);
  }
  j["config"] = config_json(kv);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct SweepArgs {
  Common common;
  std::string ckpt, graph, s_text = "1", s_graph = "0,0.5,1,2,4";
  NodeId target = 0;
  std::size_t seeds = 20;
};

int cmd_sweep(const SweepArgs& a) {
  Run r = open_run(a.ckpt, a.graph, effective_config(a.common));
  check_target(r.data.graph, a.target);
  const auto& truth = need_truth(r, "sweep");
  const auto st = parse_number_list(a.s_text), sg = parse_number_list(a.s_graph);
  if (st.empty() || sg.empty() || a.seeds == 0) throw UsageError("sweep needs non-empty grids and --seeds >= 1");
  KeyValues& kv = r.ck.config;
  kv.set("sweep.target", std::to_string(a.target));
  kv.set("sweep.s_text", a.s_text);
  kv.set("sweep.s_graph", a.s_graph);
  kv.set("sweep.seeds", std::to_string(a.seeds));
  const auto rows = guidance_sweep(r.ck.model, r.data.graph, truth, a.target, r.sampler, st, sg,
                                   seed_list(global_seed(kv), a.seeds), a.common.workers);
  echo_config(std::cout, kv);
  std::cout << "s_text,s_graph,seed,style_cosine,content_cosine\n";
  for (const auto& row : rows)
    std::cout << KeyValues::format_double(row.s_text) << ',' << KeyValues::format_double(row.s_graph) << ','
              << row.seed << ',' << fixed6(row.style_cosine) << ',' << fixed6(row.content_cosine) << '\n';
  return 0;
}

struct EvalArgs {
  Common common;
  std::string ckpt, graph, mode = "graph";
  std::size_t seeds = 1;
  std::optional<double> s_text, s_graph;
};

ExperimentConfig experiment_config(const Run& r, KeyValues& kv, std::size_t seeds, std::size_t workers,
                                   std::optional<double> s_text, std::optional<double> s_graph) {
  ExperimentConfig ec;
  ec.sampler = r.sampler;
  ec.s_text = s_text.value_or(kv.get("eval.s_text", 1.0));
  ec.s_graph = s_graph.value_or(kv.get("eval.s_graph", 1.0));
  ec.seeds = seed_list(global_seed(kv), seeds);
  ec.workers = workers;
  kv.set("eval.s_text", KeyValues::format_double(ec.s_text));
  kv.set("eval.s_graph", KeyValues::format_double(ec.s_graph));
  kv.set("eval.seeds", std::to_string(seeds));
  return ec;
}

int cmd_eval(const EvalArgs& a) {
  Run r = open_run(a.ckpt, a.graph, effective_config(a.common));
  if (r.test_ids.empty()) throw UsageError("checkpoint has no masked test nodes to evaluate");
  if (a.seeds == 0) throw UsageError("--seeds must be >= 1");
  const auto mode = parse_condition_mode(a.mode);
  KeyValues& kv = r.ck.config;
  kv.set("eval.mode", a.mode);
  const auto ec = experiment_config(r, kv, a.seeds, a.common.workers, a.s_text, a.s_graph);
  const auto rep = run_experiment(r.ck.model, r.data.graph, r.test_ids, mode, ec);
  json j;
  j["mode"] = to_string(rep.mode);
  j["n"] = rep.n;
  j["mean_cosine_x100"] = rep.mean_cosine_x100;
  j["fid"] = rep.fid;
  j["per_node"] = json::array();
  for (const auto& p : rep.per_node)
    j["per_node"].push_back({{"id", p.id}, {"cosine_x100", p.cosine_x100}, {"neighbors", p.neighbors}});
  j["config"] = config_json(kv);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct AblateArgs {
  Common common;
  std::string ckpt, baseline_ckpt, graph;
  std::size_t seeds = 1;
  std::optional<double> s_text, s_graph;
};

int cmd_ablate(const AblateArgs& a) {
  const KeyValues overrides = effective_config(a.common);
  Run r = open_run(a.ckpt, a.graph, overrides);
  if (r.test_ids.empty()) throw UsageError("checkpoint has no masked test nodes to evaluate");
  if (a.seeds == 0) throw UsageError("--seeds must be >= 1");
  if (r.ck.model.config.encoder != GraphEncoderKind::qformer)
    throw UsageError("--ckpt must be a Graph-QFormer checkpoint; pass the baseline one as --baseline-ckpt");
  KeyValues& kv = r.ck.config;
  const auto ec = experiment_config(r, kv, a.seeds, a.common.workers, a.s_text, a.s_graph);

  std::vector<EvalReport> reports;
  for (auto mode : {ConditionMode::graph, ConditionMode::text_only, ConditionMode::random_neighbors}) {
    std::cerr << "evaluating " << to_string(mode) << '\n';
    reports.push_back(run_experiment(r.ck.model, r.data.graph, r.test_ids, mode, ec));
  }
  if (!a.baseline_ckpt.empty()) {
    Run b = open_run(a.baseline_ckpt, kv.get("data.graph", std::string()), overrides);
    if (b.test_ids != r.test_ids) throw Error("the two checkpoints were trained with different test splits");
    kv.set("ablate.baseline_ckpt", a.baseline_ckpt);
    std::cerr << "evaluating baseline_encoder\n";
    reports.push_back(run_experiment(b.ck.model, b.data.graph, b.test_ids, ConditionMode::baseline_encoder, ec));
  } else {
    std::cerr << "no --baseline-ckpt given; skipping baseline_encoder\n";
  }
  echo_config(std::cout, kv);
  std::cout << "mode,n,mean_cosine_x100,fid\n";
  for (const auto& rep : reports)
    std::cout << to_string(rep.mode) << ',' << rep.n << ',' << fixed6(rep.mean_cosine_x100) << ','
              << fixed6(rep.fid) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ig2i: graph-conditioned latent diffusion toolkit"};
  app.require_subcommand(1);

  GenSynthArgs gs;
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic multimodal graph");
  add_common(gen, gs.common);
  gen->add_option("--out", gs.out, "output dataset directory")->required();
  gen->add_option("--nodes", gs.nodes, "number of nodes");
  gen->add_option("--clusters", gs.clusters, "number of clusters");
  gen->add_option("--d", gs.d, "feature dimension");

  IngestArgs ing;
  auto* ingest = app.add_subcommand("ingest", "validate a graph and report its shape");
  add_common(ingest, ing.common);
  ingest->add_option("--graph", ing.graph, "dataset directory (nodes.jsonl, edges.tsv)");
  ingest->add_option("--nodes", ing.nodes, "nodes.jsonl file");
  ingest->add_option("--edges", ing.edges, "edges.tsv file");
  ingest->add_option("--out", ing.out, "write a normalized copy to this directory");

  PprArgs pa;
  auto* ppr = app.add_subcommand("ppr", "personalized PageRank scores for a target");
  add_common(ppr, pa.common);
  ppr->add_option("--graph", pa.graph, "dataset directory")->required();
  ppr->add_option("--target", pa.target, "target node id")->required();
  ppr->add_option("--beta", pa.beta, "continuation probability (default 0.85)");
  ppr->add_option("--topk", pa.topk, "print only the top k nodes (0 = all)");

  SampleArgs sa;
  auto* samp = app.add_subcommand("sample-neighbors", "semantic PPR neighbor sampling");
  add_common(samp, sa.common);
  samp->add_option("--graph", sa.graph, "dataset directory")->required();
  samp->add_option("--target", sa.target, "target node id")->required();
  samp->add_option("--k-ppr", sa.k_ppr, "PPR candidates (default 20)");
  samp->add_option("--k", sa.k, "neighbors kept after reranking (default 5)");
  samp->add_option("--sim", sa.sim, "cosine, dot or negative_euclidean");
  samp->add_option("--beta", sa.beta, "PPR continuation probability");
  samp->add_option("--exclude", sa.exclude, "comma-separated node ids to mask");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train the graph encoder and denoiser");
  add_common(tr, ta.common);
  tr->add_option("--graph", ta.graph, "dataset directory")->required();
  tr->add_option("--out", ta.out, "checkpoint path")->required();
  tr->add_option("--steps", ta.steps, "gradient steps");
  tr->add_option("--batch-size", ta.batch_size, "examples per step");
  tr->add_option("--lr", ta.lr, "learning rate");
  tr->add_option("--optimizer", ta.optimizer, "adamw or sgd");
  tr->add_option("--encoder", ta.encoder, "qformer or baseline");
  tr->add_option("--test-nodes", ta.test_nodes, "masked test nodes");

  GenerateArgs ga;
  auto* gen2 = app.add_subcommand("generate", "sample a latent with graph classifier-free guidance");
  add_common(gen2, ga.common);
  gen2->add_option("--ckpt", ga.ckpt, "checkpoint")->required();
  gen2->add_option("--graph", ga.graph, "dataset directory (default: the one recorded in the checkpoint)");
  gen2->add_option("--target", ga.target, "target node id")->required();
  gen2->add_option("--s-text", ga.s_text, "text guidance scale")->capture_default_str();
  gen2->add_option("--s-graph", ga.s_graph, "scale of the target's own neighborhood")->capture_default_str();
  gen2->add_option("--s-graph2", ga.s_graph2, "scale of a second condition from --cluster2");
  gen2->add_option("--cluster2", ga.cluster2, "cluster for the second condition");
  gen2->add_option("--graph-cond", ga.graph_conds, "extra condition c<cluster>:<scale> or <id,id,...>:<scale>");

  SweepArgs swa;
  auto* sw = app.add_subcommand("sweep", "guidance-scale sweep scored against style and content");
  add_common(sw, swa.common);
  sw->add_option("--ckpt", swa.ckpt, "checkpoint")->required();
  sw->add_option("--graph", swa.graph, "dataset directory");
  sw->add_option("--target", swa.target, "target node id")->required();
  sw->add_option("--s-text", swa.s_text, "comma-separated text scales")->capture_default_str();
  sw->add_option("--s-graph", swa.s_graph, "comma-separated graph scales")->capture_default_str();
  sw->add_option("--seeds", swa.seeds, "seeds per grid point")->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "score generations for the masked test nodes");
  add_common(ev, ea.common);
  ev->add_option("--ckpt", ea.ckpt, "checkpoint")->required();
  ev->add_option("--graph", ea.graph, "dataset directory");
  ev->add_option("--mode", ea.mode, "graph, text_only, random_neighbors or baseline_encoder")->capture_default_str();
  ev->add_option("--seeds", ea.seeds, "samples per test node")->capture_default_str();
  ev->add_option("--s-text", ea.s_text, "text guidance scale (default 1)");
  ev->add_option("--s-graph", ea.s_graph, "graph guidance scale (default 1)");

  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "compare condition modes on the masked test nodes");
  add_common(ab, aa.common);
  ab->add_option("--ckpt", aa.ckpt, "Graph-QFormer checkpoint")->required();
  ab->add_option("--baseline-ckpt", aa.baseline_ckpt, "checkpoint trained with model.graph_encoder = baseline");
  ab->add_option("--graph", aa.graph, "dataset directory");
  ab->add_option("--seeds", aa.seeds, "samples per test node")->capture_default_str();
  ab->add_option("--s-text", aa.s_text, "text guidance scale (default 1)");
  ab->add_option("--s-graph", aa.s_graph, "graph guidance scale (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen_synth(gs);
    if (*ingest) return cmd_ingest(ing);
    if (*ppr) return cmd_ppr(pa);
    if (*samp) return cmd_sample_neighbors(sa);
    if (*tr) return cmd_train(ta);
    if (*gen2) return cmd_generate(ga);
    if (*sw) return cmd_sweep(swa);
    if (*ev) return cmd_eval(ea);
    if (*ab) return cmd_ablate(aa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
