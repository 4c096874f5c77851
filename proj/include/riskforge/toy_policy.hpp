#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskforge/action.hpp"

namespace riskforge {

inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kSeparatorToken = ";";

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<std::size_t> find(std::string_view tok) const;
  // Throws UnknownToken.
  std::size_t id(std::string_view tok) const;

  std::optional<std::size_t> eos() const { return eos_; }
  std::optional<std::size_t> separator() const { return separator_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::optional<std::size_t> eos_;
  std::optional<std::size_t> separator_;
};

// Tool names, the integer argument keys (index, page_id, seconds), integer
// literals 0..int_literals-1, the separator and end-of-sequence.
Vocabulary action_vocabulary(std::size_t int_literals = 10);

using TokenSeq = std::vector<std::size_t>;

// What the policy conditions on besides the token history: a context slot
// identifying the prompt.
struct Observation {
  std::size_t context = 0;
};

// Log-linear policy over a finite vocabulary. The feature map has exactly
// two active binary features per position:
//   - the previous token (or begin-of-sequence), and
//   - the (context, action position, phase) triple. The action position
//     counts separators emitted so far, capped at max_actions - 1; the phase
//     is the class of the previous token (start of an action, tool, integer
//     key, anything else), so choosing a tool, an argument and whether to
//     continue are separate decisions per prompt.
// logits[v] = W[v, f_prev] + W[v, f_ctx].
class ToyPolicy {
 public:
  ToyPolicy() = default;
  ToyPolicy(Vocabulary vocab, std::size_t num_contexts, std::size_t max_actions = 4);

  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t num_contexts() const { return num_contexts_; }
  std::size_t max_actions() const { return max_actions_; }
  static constexpr std::size_t kPhases = 4;
  std::size_t num_features() const {
    return vocab_.size() + 1 + num_contexts_ * max_actions_ * kPhases;
  }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  double& weight(std::size_t token, std::size_t feature) {
    return params_.at(token * num_features() + feature);
  }
  double weight(std::size_t token, std::size_t feature) const {
    return params_.at(token * num_features() + feature);
  }

  // Indices of the two active features for the next position.
  std::array<std::size_t, 2> features(const Observation& obs,
                                      std::span<const std::size_t> history) const;
  std::vector<double> logits(const Observation& obs,
                             std::span<const std::size_t> history) const;
  // Log-softmax over the whole vocabulary.
  std::vector<double> log_probs(const Observation& obs,
                                std::span<const std::size_t> history) const;

  bool operator==(const ToyPolicy&) const = default;

 private:
  Vocabulary vocab_;
  std::size_t num_contexts_ = 1;
  static constexpr std::uint8_t kPhaseActionStart = 0;
  static constexpr std::uint8_t kPhaseAfterTool = 1;
  static constexpr std::uint8_t kPhaseAfterKey = 2;
  static constexpr std::uint8_t kPhaseAfterArgument = 3;

  std::size_t max_actions_ = 1;
  std::vector<std::uint8_t> phase_;  // by previous-token feature
  std::vector<double> params_;
};

// Sets the previous-token weights so that every continuation the action
// grammar allows gets +strength (and everything else 0): after the start or
// a separator a tool name, after a tool its integer key (or a separator /
// end), after done only the end, after a key a literal, after a literal a
// separator or the end.
// Stands in for the supervised initialization preceding RL.
void apply_grammar_prior(ToyPolicy& policy, double strength);

// Per-token log-probabilities of `seq` (teacher forced).
std::vector<double> token_logprob(const ToyPolicy& policy, const Observation& obs,
                                  std::span<const std::size_t> seq);
// Same, from token strings; throws UnknownToken.
std::vector<double> token_logprob(const ToyPolicy& policy, const Observation& obs,
                                  const std::vector<std::string>& seq);

// grad += sum_t coef[t] * d log pi(seq[t] | ...) / dW
void accumulate_logprob_gradient(const ToyPolicy& policy, const Observation& obs,
                                 std::span<const std::size_t> seq,
                                 std::span<const double> coef, std::span<double> grad);

struct SampledSequence {
  TokenSeq tokens;
  bool truncated = false;  // hit the length cap before end-of-sequence
};

// G independent ancestral samples; deterministic in `seed`.
std::vector<SampledSequence> sample_group(const ToyPolicy& policy, const Observation& obs,
                                          std::size_t group_size, std::uint64_t seed,
                                          std::size_t length_cap = 16);

TokenSeq greedy_decode(const ToyPolicy& policy, const Observation& obs,
                       std::size_t length_cap = 16);

// Uniform double in [0, 1) from 53 random bits; identical on every platform.
double uniform_unit(std::uint64_t bits);

// Deterministic seed derivation for independent streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Non-integer arguments bound per tool for the prompt; the policy only
// chooses tool names and integer arguments. The k-th call of a tool takes
// the k-th argument set (the last one once they run out).
struct SlotTable {
  std::map<std::string, std::vector<Json>> args_by_tool;
  bool operator==(const SlotTable&) const = default;
};

SlotTable slots_from_actions(const std::vector<Action>& actions);
// Gives every tool without an argument set a generic one drawn from the
// prompt, so that any grammatical token sequence decodes to valid calls.
void fill_default_slots(SlotTable& slots, std::string_view question, std::string_view url);
Json slots_to_json(const SlotTable& s);
SlotTable slots_from_json(const Json& j);

// Renders a token sequence as raw response text. Grammatical sequences
// become a JSON response (which may still fail argument validation);
// ungrammatical ones are returned as plain token text.
std::string decode_to_response(const Vocabulary& vocab, std::span<const std::size_t> seq,
                               const SlotTable& slots);

// Token encoding of an action list; nullopt when an integer argument has no
// literal in the vocabulary.
std::optional<TokenSeq> encode_actions(const Vocabulary& vocab,
                                       const std::vector<Action>& actions);

std::string render_tokens(const Vocabulary& vocab, std::span<const std::size_t> seq);

}  // namespace riskforge
