#pragma once

#include <string>

#include "ig2i/config.hpp"
#include "ig2i/mmag.hpp"
#include "ig2i/sampling.hpp"

// key = value mapping for the configs that live outside the model and
// trainer: synth.* for the generator, sampler.* and ppr.* for neighbor
// sampling.

namespace ig2i {

inline void write_config(KeyValues& kv, const SyntheticConfig& c) {
  kv.set("synth.n_nodes", std::to_string(c.n_nodes));
  kv.set("synth.n_clusters", std::to_string(c.n_clusters));
  kv.set("synth.p_in", KeyValues::format_double(c.p_in));
  kv.set("synth.p_out", KeyValues::format_double(c.p_out));
  kv.set("synth.d", std::to_string(c.d));
  kv.set("synth.images_per_node", std::to_string(c.images_per_node));
  kv.set("synth.text_length", std::to_string(c.text_length));
  kv.set("synth.style_scale", KeyValues::format_double(c.style_scale));
  kv.set("synth.content_scale", KeyValues::format_double(c.content_scale));
  kv.set("synth.noise_scale", KeyValues::format_double(c.noise_scale));
  kv.set("synth.n_topics", std::to_string(c.n_topics));
  kv.set("synth.content_jitter", KeyValues::format_double(c.content_jitter));
  kv.set("synth.text_noise", KeyValues::format_double(c.text_noise));
  kv.set("synth.token_noise", KeyValues::format_double(c.token_noise));
  kv.set("synth.seed", std::to_string(c.seed));
}

inline SyntheticConfig read_synthetic_config(const KeyValues& kv, SyntheticConfig c = {}) {
  c.n_nodes = kv.get_size("synth.n_nodes", c.n_nodes);
  c.n_clusters = kv.get_size("synth.n_clusters", c.n_clusters);
  c.p_in = kv.get("synth.p_in", c.p_in);
  c.p_out = kv.get("synth.p_out", c.p_out);
  c.d = kv.get_size("synth.d", c.d);
  c.images_per_node = kv.get_size("synth.images_per_node", c.images_per_node);
  c.text_length = kv.get_size("synth.text_length", c.text_length);
  c.style_scale = kv.get("synth.style_scale", c.style_scale);
  c.content_scale = kv.get("synth.content_scale", c.content_scale);
  c.noise_scale = kv.get("synth.noise_scale", c.noise_scale);
  c.n_topics = kv.get_size("synth.n_topics", c.n_topics);
  c.content_jitter = kv.get("synth.content_jitter", c.content_jitter);
  c.text_noise = kv.get("synth.text_noise", c.text_noise);
  c.token_noise = kv.get("synth.token_noise", c.token_noise);
  c.seed = kv.get("synth.seed", c.seed);
  return c;
}

/// The exclude set is run state (the masked test nodes), not configuration,
/// so it is neither written nor read here.
inline void write_config(KeyValues& kv, const SamplerConfig& c) {
  kv.set("ppr.beta", KeyValues::format_double(c.ppr.beta));
  kv.set("ppr.max_iters", std::to_string(c.ppr.max_iters));
  kv.set("ppr.tolerance", KeyValues::format_double(c.ppr.tolerance));
  kv.set("sampler.k_ppr", std::to_string(c.k_ppr));
  kv.set("sampler.k", std::to_string(c.k));
  kv.set("sampler.similarity", to_string(c.similarity));
}

inline SamplerConfig read_sampler_config(const KeyValues& kv, SamplerConfig c = {}) {
  c.ppr.beta = kv.get("ppr.beta", c.ppr.beta);
  c.ppr.max_iters = kv.get_size("ppr.max_iters", c.ppr.max_iters);
  c.ppr.tolerance = kv.get("ppr.tolerance", c.ppr.tolerance);
  c.k_ppr = kv.get_size("sampler.k_ppr", c.k_ppr);
  c.k = kv.get_size("sampler.k", c.k);
  c.similarity = parse_similarity(kv.get("sampler.similarity", to_string(c.similarity)));
  return c;
}

}  // namespace ig2i
