#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geopix/config.hpp"
#include "geopix/dataset.hpp"

namespace geopix {

// Half-open token index range.
struct Span {
    std::int64_t begin = 0;
    std::int64_t end = 0;

    std::int64_t length() const { return end - begin; }
    bool empty() const { return end <= begin; }
    bool overlaps(const Span& o) const { return begin < o.end && o.begin < end; }
    friend bool operator==(const Span&, const Span&) = default;
};

// Instruction template with exactly one <IMAGE> and one <DESCRIPTION>, and at most one
// trailing <ANSWER>.
class PromptTemplate {
public:
    static constexpr std::string_view kImage = "<IMAGE>";
    static constexpr std::string_view kDescription = "<DESCRIPTION>";
    static constexpr std::string_view kAnswer = "<ANSWER>";

    PromptTemplate(Task task, std::string text);
    static PromptTemplate for_task(const TemplateConfig& templates, Task task);

    Task task() const { return task_; }
    const std::string& text() const { return text_; }
    bool has_answer_slot() const { return has_answer_; }

private:
    friend struct PromptBuilder;
    struct Piece {
        enum Kind { literal, image, description, answer } kind;
        std::string text;
    };

    Task task_;
    std::string text_;
    std::vector<Piece> pieces_;
    bool has_answer_ = false;
};

struct PromptTokens {
    std::vector<std::int64_t> ids;
    std::int64_t image_position = 0;  // index of the single <IMAGE> id
    Span description;                 // instruction bytes, delimiters excluded
    std::optional<Span> answer;       // answer bytes plus the end token
    Task task = Task::reasoning;
};

// The answer is only written into the sequence when one is supplied; the prompt then stops
// right where generation would begin.
PromptTokens build_prompt(std::string_view instruction, const std::optional<std::string>& answer,
                          const PromptTemplate& prompt_template);
PromptTokens build_prompt(const ImageSample& sample, const PromptTemplate& prompt_template, bool with_answer);

}  // namespace geopix
