#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace attrirec {

enum class Polarity { liked, disliked };

enum class Verdict { yes, no };

std::string_view to_string(Verdict verdict);

struct AttributedEvent {
    std::string item_ref;
    std::string title;
    std::string reason;
    Polarity polarity = Polarity::liked;

    bool operator==(const AttributedEvent&) const = default;
};

// Histories are chronological: most recent last.
struct AttributionInstruction {
    std::string task_text;
    std::vector<AttributedEvent> liked;
    std::vector<AttributedEvent> disliked;
    std::string target_id;
    std::string target_title;
    std::optional<Verdict> expected_pred;
    std::optional<std::string> expected_reason;

    bool operator==(const AttributionInstruction&) const = default;
};

// Visual references are opaque ids, parallel to base.liked / base.disliked.
// A list may be shorter than its events; the rest carry no visual.
struct MultiModalInstruction {
    AttributionInstruction base;
    std::vector<std::optional<std::string>> liked_visual;
    std::vector<std::optional<std::string>> disliked_visual;
    std::optional<std::string> target_visual;
};

struct RenderedPrompt {
    std::string text;
    std::size_t truncated = 0; // events dropped by the history bound
};

inline constexpr std::size_t kDefaultMaxHistory = 10;

extern const std::string kDefaultTaskText;

// Layout:
//   <task>
//   Liked:
//   - <title> (because: <reason>)
//   Disliked:
//   - <title> (because: <reason>)
//   Target: <title>
// Free text is escaped (backslash, parentheses, newline) so distinct
// instructions never render alike; an empty reason prints as "unspecified".
// Throws InputError if an event title is empty or an item sits in both lists.
RenderedPrompt render_prompt(const AttributionInstruction& instr,
                             std::size_t max_history = kDefaultMaxHistory);

// The visual registry maps reference ids to feature vectors; every reference
// must resolve to a vector of dimension visual_dim.
RenderedPrompt render_multimodal_prompt(const MultiModalInstruction& instr,
                                        const std::map<std::string, std::vector<double>>& visual_registry,
                                        std::size_t visual_dim,
                                        std::size_t max_history = kDefaultMaxHistory);

// "<Yes|No>. Reason: <reason>"
std::string render_expected_output(Verdict pred, std::string_view reason);

struct ParsedOutput {
    Verdict pred = Verdict::no;
    std::string reason;

    bool operator==(const ParsedOutput&) const = default;
};

// "Because the user <liked|disliked> items with <a> and <b>", joining any
// number of attributes with " and ".
std::string render_attribution_reason(Polarity polarity, const std::vector<std::string>& attributes);

// Vocabulary indices whose (tokenized) names occur as a contiguous token run
// inside the reason, in vocabulary order.
std::vector<std::size_t> reason_attributes(std::string_view reason, const std::vector<std::string>& vocabulary);

// Throws InputError when the text does not start with a yes/no verdict.
ParsedOutput parse_output(std::string_view text);

} // namespace attrirec
