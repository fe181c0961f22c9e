#include "geopix/prompt.hpp"

#include <algorithm>
#include <stdexcept>

#include "geopix/errors.hpp"
#include "geopix/tokenizer.hpp"

namespace geopix {

namespace {

std::size_t count(const std::string& text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
    return n;
}

}  // namespace

PromptTemplate::PromptTemplate(Task task, std::string text) : task_(task), text_(std::move(text)) {
    if (count(text_, kImage) != 1) throw ConfigError("template must contain exactly one <IMAGE>: " + text_);
    if (count(text_, kDescription) != 1) throw ConfigError("template must contain exactly one <DESCRIPTION>: " + text_);
    const std::size_t answers = count(text_, kAnswer);
    if (answers > 1) throw ConfigError("template contains more than one <ANSWER>: " + text_);
    has_answer_ = answers == 1;

    std::size_t pos = 0;
    while (pos < text_.size()) {
        std::size_t next = std::string::npos;
        Piece::Kind kind = Piece::literal;
        std::size_t len = 0;
        for (auto [tag, k] : {std::pair{kImage, Piece::image}, std::pair{kDescription, Piece::description},
                              std::pair{kAnswer, Piece::answer}}) {
            const auto at = text_.find(tag, pos);
            if (at < next) {
                next = at;
                kind = k;
                len = tag.size();
            }
        }
        if (next == std::string::npos) {
            pieces_.push_back({Piece::literal, text_.substr(pos)});
            break;
        }
        if (next > pos) pieces_.push_back({Piece::literal, text_.substr(pos, next - pos)});
        pieces_.push_back({kind, {}});
        pos = next + len;
    }
    if (has_answer_) {
        const auto it = std::find_if(pieces_.begin(), pieces_.end(), [](const Piece& p) { return p.kind == Piece::answer; });
        for (auto rest = std::next(it); rest != pieces_.end(); ++rest) {
            if (rest->kind != Piece::literal ||
                rest->text.find_first_not_of(" \t\r\n") != std::string::npos) {
                throw ConfigError("<ANSWER> must be the last element of the template: " + text_);
            }
        }
        pieces_.erase(std::next(it), pieces_.end());
    }
}

PromptTemplate PromptTemplate::for_task(const TemplateConfig& templates, Task task) {
    return PromptTemplate(task, task == Task::reasoning ? templates.reasoning : templates.referring);
}

struct PromptBuilder {
    static PromptTokens build(std::string_view instruction, const std::optional<std::string>& answer,
                              const PromptTemplate& t) {
        if (instruction.empty()) throw std::invalid_argument("instruction must be non-empty");
        if (answer && !t.has_answer_) throw ConfigError("template has no <ANSWER> slot: " + t.text_);
        PromptTokens out;
        out.task = t.task_;
        auto append = [&out](const std::vector<std::int64_t>& ids) { out.ids.insert(out.ids.end(), ids.begin(), ids.end()); };
        for (const auto& piece : t.pieces_) {
            switch (piece.kind) {
                case PromptTemplate::Piece::literal:
                    append(ByteTokenizer::encode(piece.text));
                    break;
                case PromptTemplate::Piece::image:
                    out.image_position = static_cast<std::int64_t>(out.ids.size());
                    out.ids.push_back(ByteTokenizer::kImage);
                    break;
                case PromptTemplate::Piece::description: {
                    out.ids.push_back(ByteTokenizer::kDescriptionBegin);
                    const auto begin = static_cast<std::int64_t>(out.ids.size());
                    append(ByteTokenizer::encode(instruction));
                    out.description = {begin, static_cast<std::int64_t>(out.ids.size())};
                    out.ids.push_back(ByteTokenizer::kDescriptionEnd);
                    break;
                }
                case PromptTemplate::Piece::answer:
                    if (answer) {
                        const auto begin = static_cast<std::int64_t>(out.ids.size());
                        append(ByteTokenizer::encode(*answer));
                        out.ids.push_back(ByteTokenizer::kEos);
                        out.answer = Span{begin, static_cast<std::int64_t>(out.ids.size())};
                    }
                    break;
            }
        }
        return out;
    }
};

PromptTokens build_prompt(std::string_view instruction, const std::optional<std::string>& answer,
                          const PromptTemplate& prompt_template) {
    return PromptBuilder::build(instruction, answer, prompt_template);
}

PromptTokens build_prompt(const ImageSample& sample, const PromptTemplate& prompt_template, bool with_answer) {
    if (with_answer && sample.task == Task::reasoning && !sample.answer) {
        throw std::invalid_argument("reasoning sample " + sample.id + " has no answer text");
    }
    const std::optional<std::string> answer = with_answer ? sample.answer : std::nullopt;
    return PromptBuilder::build(sample.instruction, answer, prompt_template);
}

}  // namespace geopix
