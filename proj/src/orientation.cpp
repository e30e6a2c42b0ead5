// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/orientation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "derail/errors.hpp"

namespace derail {

namespace {

const char *kBuiltinTemplate =
    R"(Analyze the communication styles in the specified Wikipedia editor discussions according to four dimensions: power, benevolence, arousal, and progressiveness. Definitions and response options for each dimension are provided below. Begin by reading the first four conversations. For the fifth conversation, annotate every comment according to the dimensions provided, using the same format. Select the most appropriate option from each category for each comment. If a conversation has been partially annotated, only provide annotations for the remaining comments. Provide these annotations directly, without additional explanations or digressions.

Dimensions:

1. Power: This dimension gauges the extent to which an individual seeks to control or assert dominance in a conversation.
- Options: Assertive, Confident, Neutral, Open-minded, Submissive

2. Benevolence: This measures the warmth and positivity of the interactions.
- Options: Confrontational, Dismissive, Neutral, Friendly, Supportive

3. Arousal: This refers to the level of energy and excitement in the comment.
- Options: Energetic, Neutral, Calm

4. Progressiveness: This assesses the political orientation conveyed in the comment.
- Options: Liberal, Neutral, Conservative

In the following conversations drawn from Wikipedia discussion forums, each row corresponds to a turn number, an user name, and a comment made by that user. Provide a social orientation tag for every turn in the input, and do not skip any turns. Closely follow the format in the first four examples, and finish the last sample. Do not provide any explanations.

Conversation 1:
Turn 1: Tryptofish: == Good work! ==
Turn 2: Tryptofish: '''The Admin's Barnstar''' For the apparently thankless task of drafting a suggested closing summary at the RfC/U.
Turn 3: The Wordsmith: Thank you for your kindness. I do make an effort to be even-handed, no matter what people wiki_link about me.
Turn 4: Lar: I was just popping by to offer some words of encouragement. Glad to see Tryp beat me to it. ++: /

Annotations:
Turn 1: Open-minded, Supportive, Energetic, Neutral
Turn 2: Open-minded, Supportive, Energetic, Neutral
Turn 3: Open-minded, Friendly, Neutral, Neutral
Turn 4: Open-minded, Supportive, Energetic, Neutral

Conversation 2:
(Omitted for brevity...)

Social Orientation Tags:
(Omitted for brevity...)

Conversation 3:
(Omitted for brevity...)

Social Orientation Tags:
(Omitted for brevity...)

Conversation 4:
(Omitted for brevity...)

Social Orientation Tags:
(Omitted for brevity...)

Conversation 5:
{Comments to Annotate}

Social Orientation Tags:
)";

size_t count_occurrences(const std::string &haystack, const std::string &needle) {
    if (needle.empty())
        return 0;
    size_t count = 0;
    size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

std::string collapse_newlines(const std::string &text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text)
        out.push_back(c == '\n' || c == '\r' ? ' ' : c);
    return out;
}

} // namespace

void AnnotationPromptTemplate::validate() const {
    const size_t n = count_occurrences(text, placeholder);
    if (n != 1)
        throw TemplateError("template must contain exactly one '" + placeholder +
                            "' placeholder, found " + std::to_string(n));
}

int AnnotationPromptTemplate::exemplar_count() const {
    int headings = 0;
    for (int i = 1; i <= 16; ++i) {
        if (text.find("Conversation " + std::to_string(i) + ":") != std::string::npos)
            ++headings;
        else
            break;
    }
    return headings > 0 ? headings - 1 : 0;
}

AnnotationPromptTemplate AnnotationPromptTemplate::builtin() {
    AnnotationPromptTemplate t;
    t.text = kBuiltinTemplate;
    return t;
}

AnnotationPromptTemplate AnnotationPromptTemplate::from_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw TemplateError("cannot open template '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    AnnotationPromptTemplate t;
    t.text = buf.str();
    t.validate();
    return t;
}

std::string render_conversation_for_prompt(const Conversation &c) {
    if (c.turns.empty())
        throw ArgumentError("cannot render an empty conversation");
    std::string out;
    for (size_t i = 0; i < c.turns.size(); ++i) {
        out += "Turn " + std::to_string(i + 1) + ": " + c.turns[i].speaker + ": " +
               collapse_newlines(c.turns[i].text);
        if (i + 1 < c.turns.size())
            out += "\n";
    }
    return out;
}

std::string build_annotation_prompt(const AnnotationPromptTemplate &tmpl, const Conversation &c) {
    tmpl.validate();
    const size_t pos = tmpl.text.find(tmpl.placeholder);
    std::string prompt = tmpl.text;
    prompt.replace(pos, tmpl.placeholder.size(), render_conversation_for_prompt(c));
    return prompt;
}

std::string display_keyword(std::string_view canonical) {
    std::string out(canonical);
    std::replace(out.begin(), out.end(), '_', '-');
    if (!out.empty())
        out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

std::string render_annotation_response(const std::vector<OrientationLabel> &labels) {
    std::string out;
    for (size_t i = 0; i < labels.size(); ++i) {
        out += "Turn " + std::to_string(i + 1) + ": " + display_keyword(to_keyword(labels[i].power)) +
               ", " + display_keyword(to_keyword(labels[i].benevolence)) + ", " +
               display_keyword(to_keyword(labels[i].arousal)) + ", " +
               display_keyword(to_keyword(labels[i].political_leaning)) + "\n";
    }
    return out;
}

namespace {

// Matches "Turn <digits>:" (any case for "turn") and returns the index and the
// remainder of the line, or nullopt for commentary lines.
std::optional<std::pair<int, std::string>> match_turn_line(const std::string &line) {
    const std::string t = trim(line);
    size_t i = 0;
    const std::string_view word = "turn";
    if (t.size() < 6)
        return std::nullopt;
    for (; i < 4; ++i) {
        if (std::tolower(static_cast<unsigned char>(t[i])) != word[i])
            return std::nullopt;
    }
    if (!std::isspace(static_cast<unsigned char>(t[i])))
        return std::nullopt;
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i])))
        ++i;
    size_t digits_start = i;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i])))
        ++i;
    if (i == digits_start)
        return std::nullopt;
    const int index = std::stoi(t.substr(digits_start, i - digits_start));
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i])))
        ++i;
    if (i >= t.size() || t[i] != ':')
        return std::nullopt;
    ++i;
    return std::make_pair(index, trim(t.substr(i)));
}

std::vector<std::string> split_on_commas(const std::string &s) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : s) {
        if (c == ',') {
            parts.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    parts.push_back(trim(current));
    return parts;
}

} // namespace

std::vector<OrientationLabel> parse_annotation_response(const std::string &text, int n_turns) {
    if (n_turns < 1)
        throw ArgumentError("n_turns must be >= 1");

    std::vector<std::optional<OrientationLabel>> labels(static_cast<size_t>(n_turns));

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto match = match_turn_line(line);
        if (!match)
            continue; // commentary
        const auto &[index, rest] = *match;
        if (index < 1 || index > n_turns)
            throw ParseError("unexpected turn index " + std::to_string(index) + " (conversation has " +
                             std::to_string(n_turns) + " turns)");
        if (labels[static_cast<size_t>(index - 1)].has_value())
            throw ParseError("duplicate annotation for turn " + std::to_string(index));

        // Tolerate one trailing period on the line.
        std::string body = rest;
        if (!body.empty() && body.back() == '.')
            body = trim(body.substr(0, body.size() - 1));

        const auto parts = split_on_commas(body);
        if (parts.size() != 4)
            throw ParseError("turn " + std::to_string(index) + ": expected 4 keywords, got " +
                             std::to_string(parts.size()));

        const auto power = parse_power(parts[0]);
        if (!power)
            throw ParseError("turn " + std::to_string(index) + ": unknown power keyword \"" + parts[0] + "\"");
        const auto benevolence = parse_benevolence(parts[1]);
        if (!benevolence)
            throw ParseError("turn " + std::to_string(index) + ": unknown benevolence keyword \"" +
                             parts[1] + "\"");
        const auto arousal = parse_arousal(parts[2]);
        if (!arousal)
            throw ParseError("turn " + std::to_string(index) + ": unknown arousal keyword \"" + parts[2] + "\"");
        const auto political = parse_political_leaning(parts[3]);
        if (!political)
            throw ParseError("turn " + std::to_string(index) + ": unknown political leaning keyword \"" +
                             parts[3] + "\"");

        labels[static_cast<size_t>(index - 1)] = OrientationLabel{*power, *benevolence, *arousal, *political};
    }

    std::vector<OrientationLabel> out;
    out.reserve(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i])
            throw ParseError("missing annotation for turn " + std::to_string(i + 1));
        out.push_back(*labels[i]);
    }
    return out;
}

Conversation annotate_conversation(AnnotationBackend &backend, const AnnotationPromptTemplate &tmpl,
                                   const Conversation &c, int max_retries) {
    const std::string prompt = build_annotation_prompt(tmpl, c);
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        const std::string response = backend.annotate(prompt);
        try {
            const auto labels = parse_annotation_response(response, static_cast<int>(c.turns.size()));
            Conversation annotated = c;
            for (size_t i = 0; i < annotated.turns.size(); ++i)
                annotated.turns[i].orientation = labels[i];
            return annotated;
        } catch (const ParseError &e) {
            last_error = e.what();
        }
    }
    throw AnnotationError("annotation failed for '" + c.id + "' after " +
                          std::to_string(max_retries + 1) + " attempts: " + last_error);
}

// --------------------------------------------------------------------------
// Agreement statistics
// --------------------------------------------------------------------------

std::string_view to_string(Judgment j) {
    switch (j) {
    case Judgment::agree: return "agree";
    case Judgment::somewhat_agree: return "somewhat_agree";
    case Judgment::disagree: return "disagree";
    case Judgment::not_applicable: return "not_applicable";
    }
    return "";
}

std::optional<Judgment> parse_judgment(std::string_view s) {
    if (s == "agree")
        return Judgment::agree;
    if (s == "somewhat_agree")
        return Judgment::somewhat_agree;
    if (s == "disagree")
        return Judgment::disagree;
    if (s == "not_applicable")
        return Judgment::not_applicable;
    return std::nullopt;
}

std::vector<AgreementRecord> load_agreement_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    std::vector<AgreementRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty())
            continue;
        if (line_no == 1 && t.rfind("conversation_id", 0) == 0)
            continue; // header
        std::vector<std::string> fields;
        std::string current;
        for (char c : t) {
            if (c == ',') {
                fields.push_back(trim(current));
                current.clear();
            } else {
                current.push_back(c);
            }
        }
        fields.push_back(trim(current));
        if (fields.size() != 5)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        AgreementRecord r;
        r.conversation_id = fields[0];
        try {
            r.turn_index = std::stoi(fields[1]);
        } catch (...) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad turn_index '" + fields[1] + "'");
        }
        const auto axis = parse_axis(fields[2]);
        if (!axis)
            throw ParseError(path + ":" + std::to_string(line_no) + ": unknown axis '" + fields[2] + "'");
        r.axis = *axis;
        const auto judgment = parse_judgment(fields[3]);
        if (!judgment)
            throw ParseError(path + ":" + std::to_string(line_no) + ": unknown judgment '" + fields[3] + "'");
        r.judgment = *judgment;
        r.annotator_id = fields[4];
        records.push_back(std::move(r));
    }
    return records;
}

void save_agreement_csv(const std::vector<AgreementRecord> &records, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out << "conversation_id,turn_index,axis,judgment,annotator_id\n";
    for (const auto &r : records) {
        out << r.conversation_id << "," << r.turn_index << "," << to_keyword(r.axis) << ","
            << to_string(r.judgment) << "," << r.annotator_id << "\n";
    }
}

double krippendorff_alpha(const std::vector<Rating> &ratings) {
    // Ratings grouped per item; items with a single rating are excluded.
    std::map<std::string, std::vector<std::string>> units;
    for (const auto &r : ratings)
        units[r.item].push_back(r.value);

    double n = 0.0;
    double observed = 0.0; // sum over units of (disagreeing ordered pairs)/(m_u - 1)
    std::map<std::string, double> value_counts;
    for (const auto &[item, values] : units) {
        const size_t m = values.size();
        if (m < 2)
            continue;
        n += static_cast<double>(m);
        for (const auto &v : values)
            value_counts[v] += 1.0;
        int disagreeing = 0;
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < m; ++j)
                if (i != j && values[i] != values[j])
                    ++disagreeing;
        observed += static_cast<double>(disagreeing) / static_cast<double>(m - 1);
    }

    if (n < 2.0)
        throw UndefinedStatisticError("krippendorff_alpha: no item has two or more ratings");

    const double d_o = observed / n;
    double sum_sq = 0.0;
    for (const auto &[value, count] : value_counts)
        sum_sq += count * count;
    const double d_e = (n * n - sum_sq) / (n * (n - 1.0));

    if (d_e == 0.0) {
        if (d_o == 0.0)
            return 1.0;
        throw UndefinedStatisticError("krippendorff_alpha: expected disagreement is zero");
    }
    return 1.0 - d_o / d_e;
}

double krippendorff_alpha(const std::vector<AgreementRecord> &records) {
    std::vector<Rating> ratings;
    ratings.reserve(records.size());
    for (const auto &r : records) {
        Rating rating;
        rating.item = r.conversation_id + "#" + std::to_string(r.turn_index) + "#" +
                      std::string(to_keyword(r.axis));
        rating.annotator = r.annotator_id;
        rating.value = std::string(to_string(r.judgment));
        ratings.push_back(std::move(rating));
    }
    return krippendorff_alpha(ratings);
}

AgreementSummary agreement_summary(const std::vector<AgreementRecord> &records) {
    if (records.empty())
        throw ArgumentError("agreement_summary requires at least one record");

    AgreementSummary summary;
    summary.n_records = static_cast<int>(records.size());

    std::map<Axis, std::map<Judgment, int>> axis_counts;
    std::map<Judgment, int> overall_counts;
    std::map<Axis, int> axis_totals;
    for (const auto &r : records) {
        ++axis_counts[r.axis][r.judgment];
        ++axis_totals[r.axis];
        ++overall_counts[r.judgment];
    }

    const std::array<Judgment, 4> all_judgments = {Judgment::agree, Judgment::somewhat_agree,
                                                   Judgment::disagree, Judgment::not_applicable};
    for (const auto &[axis, counts] : axis_counts) {
        for (Judgment j : all_judgments) {
            const int c = counts.count(j) ? counts.at(j) : 0;
            summary.per_axis[axis][j] = static_cast<double>(c) / static_cast<double>(axis_totals[axis]);
        }
    }
    for (Judgment j : all_judgments) {
        const int c = overall_counts.count(j) ? overall_counts.at(j) : 0;
        summary.overall[j] = static_cast<double>(c) / static_cast<double>(records.size());
    }
    return summary;
}

nlohmann::ordered_json AgreementSummary::to_json() const {
    nlohmann::ordered_json j;
    j["n_records"] = n_records;
    nlohmann::ordered_json axes;
    for (const auto &[axis, props] : per_axis) {
        nlohmann::ordered_json a;
        for (const auto &[judgment, p] : props)
            a[std::string(to_string(judgment))] = p;
        axes[std::string(to_keyword(axis))] = a;
    }
    j["per_axis"] = axes;
    nlohmann::ordered_json overall_json;
    for (const auto &[judgment, p] : overall)
        overall_json[std::string(to_string(judgment))] = p;
    j["overall"] = overall_json;
    return j;
}

} // namespace derail
