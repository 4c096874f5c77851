#include "riskforge/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "riskforge/errors.hpp"
#include "riskforge/response.hpp"

namespace riskforge {

namespace {

constexpr std::array<std::string_view, 3> kIntKeys = {"index", "page_id", "seconds"};

// Names of the required/defaulted integer fields of a tool, in schema order.
// These are the only arguments carried by tokens.
std::vector<std::string> token_fields(const Action& a) {
  std::vector<std::string> out;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        T::fields(t, [&](std::string_view name, const auto& v, Presence) {
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>, std::int64_t>) {
            out.emplace_back(name);
          }
        });
      },
      a);
  return out;
}

std::optional<std::int64_t> int_literal(std::string_view tok) {
  if (tok.empty() || tok.size() > 9) return std::nullopt;
  std::int64_t v = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

bool is_int_key(std::string_view tok) {
  return std::find(kIntKeys.begin(), kIntKeys.end(), tok) != kIntKeys.end();
}

const AgentResponse& filler_response() {
  static const AgentResponse r{"Choose the next tool calls for the current page.",
                               "Previous goal assessed from the page state.",
                               "Policy rollout.", "Execute the predicted tool calls.", {}};
  return r;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
    if (tokens_[i] == kEosToken) eos_ = i;
    if (tokens_[i] == kSeparatorToken) separator_ = i;
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view tok) const {
  auto it = index_.find(tok);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view tok) const {
  auto found = find(tok);
  if (!found) throw UnknownToken(std::string(tok));
  return *found;
}

Vocabulary action_vocabulary(std::size_t int_literals) {
  std::vector<std::string> toks;
  for (auto name : tool_names()) toks.emplace_back(name);
  for (auto key : kIntKeys) toks.emplace_back(key);
  for (std::size_t i = 0; i < int_literals; ++i) toks.push_back(std::to_string(i));
  toks.emplace_back(kSeparatorToken);
  toks.emplace_back(kEosToken);
  return Vocabulary(std::move(toks));
}

ToyPolicy::ToyPolicy(Vocabulary vocab, std::size_t num_contexts, std::size_t max_actions)
    : vocab_(std::move(vocab)),
      num_contexts_(std::max<std::size_t>(num_contexts, 1)),
      max_actions_(std::max<std::size_t>(max_actions, 1)) {
  if (vocab_.size() == 0) throw std::invalid_argument("empty vocabulary");
  phase_.assign(vocab_.size() + 1, kPhaseActionStart);
  for (std::size_t v = 0; v < vocab_.size(); ++v) {
    const auto& tok = vocab_.token(v);
    if (vocab_.separator() == v) continue;
    if (make_default_action(tok)) {
      phase_[1 + v] = kPhaseAfterTool;
    } else if (is_int_key(tok)) {
      phase_[1 + v] = kPhaseAfterKey;
    } else {
      phase_[1 + v] = kPhaseAfterArgument;
    }
  }
  params_.assign(vocab_.size() * num_features(), 0.0);
}

std::array<std::size_t, 2> ToyPolicy::features(const Observation& obs,
                                               std::span<const std::size_t> history) const {
  if (obs.context >= num_contexts_) {
    throw std::out_of_range("observation context " + std::to_string(obs.context) +
                            " outside policy's " + std::to_string(num_contexts_));
  }
  const std::size_t prev = history.empty() ? 0 : 1 + history.back();
  std::size_t position = 0;
  if (auto sep = vocab_.separator()) {
    position = static_cast<std::size_t>(std::count(history.begin(), history.end(), *sep));
  }
  position = std::min(position, max_actions_ - 1);
  const std::size_t slot = (obs.context * max_actions_ + position) * kPhases + phase_[prev];
  return {prev, vocab_.size() + 1 + slot};
}

std::vector<double> ToyPolicy::logits(const Observation& obs,
                                      std::span<const std::size_t> history) const {
  const auto f = features(obs, history);
  const std::size_t nf = num_features();
  std::vector<double> out(vocab_.size());
  for (std::size_t v = 0; v < vocab_.size(); ++v) {
    out[v] = params_[v * nf + f[0]] + params_[v * nf + f[1]];
  }
  return out;
}

std::vector<double> ToyPolicy::log_probs(const Observation& obs,
                                         std::span<const std::size_t> history) const {
  auto z = logits(obs, history);
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  for (double& v : z) v -= lse;
  return z;
}

void apply_grammar_prior(ToyPolicy& policy, double strength) {
  const auto& vocab = policy.vocabulary();
  const auto sep = vocab.separator();
  const auto eos = vocab.eos();
  std::vector<std::size_t> tools, literals;
  for (std::size_t v = 0; v < vocab.size(); ++v) {
    if (make_default_action(vocab.token(v))) tools.push_back(v);
    if (int_literal(vocab.token(v))) literals.push_back(v);
  }
  auto allow = [&](std::size_t feature, std::size_t v) { policy.weight(v, feature) = strength; };
  auto allow_end = [&](std::size_t feature) {
    if (sep) allow(feature, *sep);
    if (eos) allow(feature, *eos);
  };
  for (auto t : tools) allow(0, t);
  if (sep) {
    for (auto t : tools) allow(1 + *sep, t);
  }
  for (auto t : tools) {
    const auto fields = token_fields(*make_default_action(vocab.token(t)));
    const auto key = fields.empty() ? std::nullopt : vocab.find(fields.front());
    if (key) {
      allow(1 + t, *key);
    } else if (vocab.token(t) == "done") {
      if (eos) allow(1 + t, *eos);  // done ends the episode
    } else {
      allow_end(1 + t);
    }
  }
  for (auto k : kIntKeys) {
    if (auto key = vocab.find(k)) {
      for (auto l : literals) allow(1 + *key, l);
    }
  }
  for (auto l : literals) allow_end(1 + l);
  // No separator once the last action position is reached.
  if (sep) {
    const std::size_t base = vocab.size() + 1;
    const std::size_t last = policy.max_actions() - 1;
    for (std::size_t c = 0; c < policy.num_contexts(); ++c) {
      for (std::size_t ph = 0; ph < ToyPolicy::kPhases; ++ph) {
        policy.weight(*sep, base + (c * policy.max_actions() + last) * ToyPolicy::kPhases + ph) =
            -strength;
      }
    }
  }
}

std::vector<double> token_logprob(const ToyPolicy& policy, const Observation& obs,
                                  std::span<const std::size_t> seq) {
  std::vector<double> out;
  out.reserve(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq[t] >= policy.vocabulary().size()) {
      throw UnknownToken("#" + std::to_string(seq[t]));
    }
    out.push_back(policy.log_probs(obs, seq.first(t))[seq[t]]);
  }
  return out;
}

std::vector<double> token_logprob(const ToyPolicy& policy, const Observation& obs,
                                  const std::vector<std::string>& seq) {
  TokenSeq ids;
  for (const auto& tok : seq) ids.push_back(policy.vocabulary().id(tok));
  return token_logprob(policy, obs, ids);
}

void accumulate_logprob_gradient(const ToyPolicy& policy, const Observation& obs,
                                 std::span<const std::size_t> seq,
                                 std::span<const double> coef, std::span<double> grad) {
  if (coef.size() != seq.size() || grad.size() != policy.num_params()) {
    throw ShapeMismatch("gradient accumulation shape mismatch");
  }
  const std::size_t nf = policy.num_features();
  const std::size_t nv = policy.vocabulary().size();
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (coef[t] == 0.0) continue;
    const auto history = seq.first(t);
    const auto f = policy.features(obs, history);
    const auto lp = policy.log_probs(obs, history);
    for (std::size_t v = 0; v < nv; ++v) {
      const double d = coef[t] * ((v == seq[t] ? 1.0 : 0.0) - std::exp(lp[v]));
      grad[v * nf + f[0]] += d;
      grad[v * nf + f[1]] += d;
    }
  }
}

double uniform_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

namespace {

std::size_t sample_categorical(const std::vector<double>& logp, double u) {
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t v = 0; v < logp.size(); ++v) {
    const double p = std::exp(logp[v]);
    if (p <= 0.0) continue;
    last = v;
    acc += p;
    if (u < acc) return v;
  }
  return last;
}

}  // namespace

std::vector<SampledSequence> sample_group(const ToyPolicy& policy, const Observation& obs,
                                          std::size_t group_size, std::uint64_t seed,
                                          std::size_t length_cap) {
  std::mt19937_64 rng(seed);
  const auto eos = policy.vocabulary().eos();
  std::vector<SampledSequence> out(group_size);
  for (auto& s : out) {
    s.truncated = true;
    while (s.tokens.size() < length_cap) {
      const auto lp = policy.log_probs(obs, s.tokens);
      const auto tok = sample_categorical(lp, uniform_unit(rng()));
      s.tokens.push_back(tok);
      if (eos && tok == *eos) {
        s.truncated = false;
        break;
      }
    }
  }
  return out;
}

TokenSeq greedy_decode(const ToyPolicy& policy, const Observation& obs,
                       std::size_t length_cap) {
  const auto eos = policy.vocabulary().eos();
  TokenSeq seq;
  while (seq.size() < length_cap) {
    const auto lp = policy.log_probs(obs, seq);
    const auto tok = static_cast<std::size_t>(
        std::max_element(lp.begin(), lp.end()) - lp.begin());
    seq.push_back(tok);
    if (eos && tok == *eos) break;
  }
  return seq;
}

SlotTable slots_from_actions(const std::vector<Action>& actions) {
  SlotTable table;
  for (const auto& a : actions) {
    const std::string name(tool_name(a));
    Json args = action_to_json(a)[name];
    for (const auto& f : token_fields(a)) args.erase(f);
    table.args_by_tool[name].push_back(std::move(args));
  }
  return table;
}

void fill_default_slots(SlotTable& slots, std::string_view question, std::string_view url) {
  for (auto name : tool_names()) {
    const std::string tool(name);
    if (slots.args_by_tool.count(tool)) continue;
    const auto proto = make_default_action(tool);
    Json args = action_to_json(*proto)[tool];
    for (const auto& f : token_fields(*proto)) args.erase(f);
    for (auto& [key, v] : args.items()) {
      if (!v.is_string() || !v.get<std::string>().empty()) continue;
      if (key == "url") {
        v = url;
      } else if (key == "keys") {
        v = "Enter";
      } else if (key == "file_name") {
        v = "extract_1";
      } else {
        v = question;
      }
    }
    slots.args_by_tool[tool].push_back(std::move(args));
  }
}

Json slots_to_json(const SlotTable& s) {
  Json j = Json::object();
  for (const auto& [tool, args] : s.args_by_tool) j[tool] = args;
  return j;
}

SlotTable slots_from_json(const Json& j) {
  SlotTable s;
  if (!j.is_object()) throw SchemaError(0, "slots", "expected object");
  for (const auto& [tool, sets] : j.items()) {
    if (!sets.is_array()) throw SchemaError(0, "slots." + tool, "expected list");
    for (const auto& args : sets) s.args_by_tool[tool].push_back(args);
  }
  return s;
}

std::string render_tokens(const Vocabulary& vocab, std::span<const std::size_t> seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += seq[i] < vocab.size() ? vocab.token(seq[i]) : "<unk>";
  }
  return out;
}

std::string decode_to_response(const Vocabulary& vocab, std::span<const std::size_t> seq,
                               const SlotTable& slots) {
  enum class Expect { Tool, ToolOrEnd, Literal };
  Json actions = Json::array();
  Json* current_args = nullptr;
  std::string pending_key;
  Expect expect = Expect::ToolOrEnd;
  bool malformed = false;
  bool ended = false;
  std::map<std::string, std::size_t> calls;

  for (auto id : seq) {
    if (id >= vocab.size()) {
      malformed = true;
      break;
    }
    const auto& tok = vocab.token(id);
    if (tok == kEosToken) {
      if (expect != Expect::ToolOrEnd) malformed = true;
      ended = true;
      break;
    }
    if (expect == Expect::Literal) {
      auto lit = int_literal(tok);
      if (!lit) {
        malformed = true;
        break;
      }
      (*current_args)[pending_key] = *lit;
      expect = Expect::ToolOrEnd;
      continue;
    }
    if (auto proto = make_default_action(tok)) {
      if (current_args != nullptr && expect != Expect::Tool) {
        malformed = true;  // tools must be separated
        break;
      }
      Json args = action_to_json(*proto)[tok];
      for (const auto& f : token_fields(*proto)) args.erase(f);
      const std::size_t nth = calls[tok]++;
      if (auto it = slots.args_by_tool.find(tok); it != slots.args_by_tool.end() && !it->second.empty()) {
        const auto& set = it->second[std::min(nth, it->second.size() - 1)];
        for (const auto& [k, v] : set.items()) args[k] = v;
      }
      Json entry = Json::object();
      entry[tok] = std::move(args);
      actions.push_back(std::move(entry));
      current_args = &actions.back()[tok];
      expect = Expect::ToolOrEnd;
    } else if (is_int_key(tok)) {
      if (current_args == nullptr || expect != Expect::ToolOrEnd) {
        malformed = true;
        break;
      }
      pending_key = tok;
      expect = Expect::Literal;
    } else if (tok == kSeparatorToken) {
      if (current_args == nullptr || expect != Expect::ToolOrEnd) {
        malformed = true;
        break;
      }
      expect = Expect::Tool;
    } else {
      malformed = true;
      break;
    }
  }
  // A length-capped sequence is decoded as far as it is grammatical.
  if (!ended && expect != Expect::ToolOrEnd) malformed = true;
  if (malformed) return render_tokens(vocab, seq);

  Json j = response_to_json(filler_response());
  j["action"] = std::move(actions);
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::optional<TokenSeq> encode_actions(const Vocabulary& vocab,
                                       const std::vector<Action>& actions) {
  TokenSeq out;
  const auto sep = vocab.separator();
  const auto eos = vocab.eos();
  if (!eos || (!sep && actions.size() > 1)) return std::nullopt;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out.push_back(*sep);
    const auto& a = actions[i];
    auto tool = vocab.find(tool_name(a));
    if (!tool) return std::nullopt;
    out.push_back(*tool);
    const Json args = action_to_json(a)[std::string(tool_name(a))];
    for (const auto& f : token_fields(a)) {
      auto key = vocab.find(f);
      auto lit = vocab.find(std::to_string(args[f].get<std::int64_t>()));
      if (!key || !lit) return std::nullopt;
      out.push_back(*key);
      out.push_back(*lit);
    }
  }
  out.push_back(*eos);
  return out;
}

}  // namespace riskforge
