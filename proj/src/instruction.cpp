#include "attrirec/instruction.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "attrirec/errors.hpp"
#include "attrirec/io.hpp"
#include "attrirec/text.hpp"

namespace attrirec {

const std::string kDefaultTaskText =
    "Given the user's liked and disliked items with reasons, answer Yes or No: "
    "will the user enjoy the target item? Explain the reason.";

std::string_view to_string(Verdict verdict) {
    return verdict == Verdict::yes ? "Yes" : "No";
}

namespace {

std::string escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (const char c : text) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '(': out += "\\("; break;
        case ')': out += "\\)"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

std::string render_reason(std::string_view reason) {
    if (reason.empty()) {
        return "unspecified";
    }
    // Keeps a literal "unspecified" distinct from the empty reason.
    if (reason == "unspecified") {
        return "\\unspecified";
    }
    return escape(reason);
}

void validate(const AttributionInstruction& instr) {
    std::set<std::string> liked_refs;
    for (const auto& event : instr.liked) {
        if (event.title.empty()) {
            throw InputError("history event " + event.item_ref + " has an empty title");
        }
        liked_refs.insert(event.item_ref);
    }
    for (const auto& event : instr.disliked) {
        if (event.title.empty()) {
            throw InputError("history event " + event.item_ref + " has an empty title");
        }
        if (liked_refs.contains(event.item_ref)) {
            throw InputError("item " + event.item_ref + " appears in both liked and disliked history");
        }
    }
}

std::size_t first_kept(std::size_t size, std::size_t max_history) {
    return size > max_history ? size - max_history : 0;
}

void check_visual(const std::optional<std::string>& ref,
                  const std::map<std::string, std::vector<double>>& registry, std::size_t visual_dim) {
    if (!ref) {
        return;
    }
    const auto it = registry.find(*ref);
    if (it == registry.end()) {
        throw InputError("dangling visual reference " + *ref);
    }
    if (it->second.size() != visual_dim) {
        throw InputError("visual reference " + *ref + " has dimension " + std::to_string(it->second.size()) +
                         ", expected " + std::to_string(visual_dim));
    }
}

std::string visual_suffix(const std::optional<std::string>& ref) {
    return ref ? " [visual:" + escape(*ref) + "]" : std::string();
}

RenderedPrompt render(const AttributionInstruction& instr, std::size_t max_history,
                      const std::vector<std::optional<std::string>>* liked_visual,
                      const std::vector<std::optional<std::string>>* disliked_visual,
                      const std::optional<std::string>* target_visual) {
    validate(instr);
    RenderedPrompt out;
    std::string& text = out.text;
    text += escape(instr.task_text);
    text += '\n';
    auto block = [&](const char* header, const std::vector<AttributedEvent>& events,
                     const std::vector<std::optional<std::string>>* visual) {
        text += header;
        text += '\n';
        const std::size_t start = first_kept(events.size(), max_history);
        out.truncated += start;
        for (std::size_t k = start; k < events.size(); ++k) {
            text += "- ";
            text += escape(events[k].title);
            text += " (because: ";
            text += render_reason(events[k].reason);
            text += ')';
            if (visual != nullptr && k < visual->size()) {
                text += visual_suffix((*visual)[k]);
            }
            text += '\n';
        }
    };
    block("Liked:", instr.liked, liked_visual);
    block("Disliked:", instr.disliked, disliked_visual);
    text += "Target: ";
    text += escape(instr.target_title);
    if (target_visual != nullptr) {
        text += visual_suffix(*target_visual);
    }
    text += '\n';
    return out;
}

bool iequals_prefix(std::string_view text, std::string_view word) {
    if (text.size() < word.size()) {
        return false;
    }
    for (std::size_t k = 0; k < word.size(); ++k) {
        if (std::tolower(static_cast<unsigned char>(text[k])) != word[k]) {
            return false;
        }
    }
    return true;
}

} // namespace

RenderedPrompt render_prompt(const AttributionInstruction& instr, std::size_t max_history) {
    return render(instr, max_history, nullptr, nullptr, nullptr);
}

RenderedPrompt render_multimodal_prompt(const MultiModalInstruction& instr,
                                        const std::map<std::string, std::vector<double>>& visual_registry,
                                        std::size_t visual_dim, std::size_t max_history) {
    if (instr.liked_visual.size() > instr.base.liked.size() ||
        instr.disliked_visual.size() > instr.base.disliked.size()) {
        throw InputError("more visual references than history events");
    }
    for (const auto& ref : instr.liked_visual) {
        check_visual(ref, visual_registry, visual_dim);
    }
    for (const auto& ref : instr.disliked_visual) {
        check_visual(ref, visual_registry, visual_dim);
    }
    check_visual(instr.target_visual, visual_registry, visual_dim);
    return render(instr.base, max_history, &instr.liked_visual, &instr.disliked_visual, &instr.target_visual);
}

std::string render_expected_output(Verdict pred, std::string_view reason) {
    std::string out(to_string(pred));
    out += ". Reason: ";
    out += reason;
    return out;
}

std::string render_attribution_reason(Polarity polarity, const std::vector<std::string>& attributes) {
    std::string out = polarity == Polarity::liked ? "Because the user liked items with "
                                                  : "Because the user disliked items with ";
    for (std::size_t k = 0; k < attributes.size(); ++k) {
        if (k > 0) {
            out += " and ";
        }
        out += attributes[k];
    }
    return out;
}

std::vector<std::size_t> reason_attributes(std::string_view reason, const std::vector<std::string>& vocabulary) {
    std::vector<std::size_t> found;
    const auto tokens = tokenize(reason);
    if (tokens.empty()) {
        return found;
    }
    for (std::size_t a = 0; a < vocabulary.size(); ++a) {
        const auto name = tokenize(vocabulary[a]);
        if (name.empty() || name.size() > tokens.size()) {
            continue;
        }
        for (std::size_t start = 0; start + name.size() <= tokens.size(); ++start) {
            if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start))) {
                found.push_back(a);
                break;
            }
        }
    }
    return found;
}

ParsedOutput parse_output(std::string_view text) {
    const std::string_view body = trim_view(text);
    ParsedOutput out;
    std::size_t consumed = 0;
    if (iequals_prefix(body, "yes")) {
        out.pred = Verdict::yes;
        consumed = 3;
    } else if (iequals_prefix(body, "no")) {
        out.pred = Verdict::no;
        consumed = 2;
    } else {
        throw InputError("output does not start with Yes or No");
    }
    if (consumed < body.size() && std::isalnum(static_cast<unsigned char>(body[consumed])) != 0) {
        throw InputError("output does not start with Yes or No");
    }
    const auto marker = body.find("Reason:");
    if (marker != std::string_view::npos) {
        out.reason = std::string(trim_view(body.substr(marker + 7)));
    }
    return out;
}

} // namespace attrirec
