// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/generator.hpp"

#include <algorithm>
#include <fstream>

#include "derail/errors.hpp"

namespace derail {

void SerializationScheme::validate() const {
    const std::vector<std::pair<const char *, const std::string *>> fields = {
        {"turn_delimiter", &turn_delimiter},
        {"label_open", &label_open},
        {"label_close", &label_close},
        {"end_marker", &end_marker},
        {"speaker_separator", &speaker_separator},
    };
    for (const auto &[name, value] : fields) {
        if (value->empty())
            throw ConfigError(std::string("serialization scheme: ") + name + " must be non-empty");
    }
    const std::vector<const std::string *> structural = {&turn_delimiter, &label_open, &end_marker,
                                                         &speaker_separator};
    for (size_t i = 0; i < structural.size(); ++i)
        for (size_t j = i + 1; j < structural.size(); ++j)
            if (*structural[i] == *structural[j])
                throw ConfigError("serialization scheme: structural strings must be pairwise distinct");
}

nlohmann::ordered_json SerializationScheme::to_json() const {
    nlohmann::ordered_json j;
    j["include_orientation"] = include_orientation;
    j["turn_delimiter"] = turn_delimiter;
    j["label_open"] = label_open;
    j["label_close"] = label_close;
    j["end_marker"] = end_marker;
    j["speaker_separator"] = speaker_separator;
    return j;
}

SerializationScheme SerializationScheme::from_json(const nlohmann::json &j) {
    SerializationScheme s;
    if (j.contains("include_orientation"))
        s.include_orientation = j.at("include_orientation").get<bool>();
    if (j.contains("turn_delimiter"))
        s.turn_delimiter = j.at("turn_delimiter").get<std::string>();
    if (j.contains("label_open"))
        s.label_open = j.at("label_open").get<std::string>();
    if (j.contains("label_close"))
        s.label_close = j.at("label_close").get<std::string>();
    if (j.contains("end_marker"))
        s.end_marker = j.at("end_marker").get<std::string>();
    if (j.contains("speaker_separator"))
        s.speaker_separator = j.at("speaker_separator").get<std::string>();
    s.validate();
    return s;
}

namespace {

std::string render_label_tag(const OrientationLabel &label, const SerializationScheme &scheme) {
    return scheme.label_open + std::string(to_keyword(label.power)) + ", " +
           std::string(to_keyword(label.benevolence)) + ", " + std::string(to_keyword(label.arousal)) +
           ", " + std::string(to_keyword(label.political_leaning)) + scheme.label_close;
}

} // namespace

std::string serialize(const std::vector<Turn> &turns, const SerializationScheme &scheme,
                      MissingLabel missing) {
    scheme.validate();
    if (turns.empty())
        throw SerializationError("cannot serialize an empty turn list");

    std::string out;
    for (size_t i = 0; i < turns.size(); ++i) {
        const Turn &t = turns[i];
        if (i)
            out += scheme.turn_delimiter;
        if (scheme.include_orientation) {
            if (t.orientation)
                out += render_label_tag(*t.orientation, scheme) + " ";
            else if (missing == MissingLabel::error)
                throw SerializationError("turn " + std::to_string(i + 1) +
                                         " has no orientation label but the scheme requires one");
        }
        out += t.speaker + scheme.speaker_separator + t.text;
    }
    return out;
}

namespace {

// Splits on the exact needle; a whitespace-only needle falls back to raw use.
std::vector<std::string> split_on(const std::string &text, const std::string &needle) {
    std::vector<std::string> parts;
    size_t pos = 0;
    while (true) {
        const size_t next = text.find(needle, pos);
        if (next == std::string::npos) {
            parts.push_back(text.substr(pos));
            break;
        }
        parts.push_back(text.substr(pos, next - pos));
        pos = next + needle.size();
    }
    return parts;
}

struct TagParse {
    bool valid = false;
    OrientationLabel label;
    std::string error;
};

TagParse parse_label_tag(const std::string &inside) {
    TagParse result;
    std::vector<std::string> parts;
    std::string current;
    for (char c : inside) {
        if (c == ',') {
            parts.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    parts.push_back(trim(current));
    if (parts.size() != 4) {
        result.error = "expected 4 keywords in tag, got " + std::to_string(parts.size());
        return result;
    }
    const auto power = parse_power(parts[0]);
    const auto benevolence = parse_benevolence(parts[1]);
    const auto arousal = parse_arousal(parts[2]);
    const auto political = parse_political_leaning(parts[3]);
    if (!power || !benevolence || !arousal || !political) {
        const std::string bad = !power ? parts[0] : (!benevolence ? parts[1] : (!arousal ? parts[2] : parts[3]));
        result.error = "keyword \"" + bad + "\" does not fit its axis position";
        return result;
    }
    result.valid = true;
    result.label = {*power, *benevolence, *arousal, *political};
    return result;
}

} // namespace

DeserializeResult deserialize_continuation(const std::string &text, const SerializationScheme &scheme) {
    scheme.validate();
    DeserializeResult result;

    // Generation stops at the end marker; anything after it is discarded.
    std::string body = text;
    const size_t marker = body.find(scheme.end_marker);
    if (marker != std::string::npos)
        body = body.substr(0, marker);

    // Detokenized generator output carries surrounding spaces instead of the
    // delimiter's exact whitespace, so split on the trimmed delimiter core.
    const std::string core = trim(scheme.turn_delimiter);
    const auto segments = split_on(body, core.empty() ? scheme.turn_delimiter : core);

    for (const auto &raw_segment : segments) {
        std::string segment = trim(raw_segment);
        if (segment.empty())
            continue;

        Turn turn;
        if (segment.rfind(scheme.label_open, 0) == 0) {
            const size_t close = segment.find(scheme.label_close, scheme.label_open.size());
            if (close != std::string::npos) {
                const std::string inside =
                    segment.substr(scheme.label_open.size(), close - scheme.label_open.size());
                const auto tag = parse_label_tag(inside);
                if (tag.valid) {
                    turn.orientation = tag.label;
                    segment = trim(segment.substr(close + scheme.label_close.size()));
                } else {
                    // Generation noise must not abort forecasting: keep the tag as text.
                    result.warnings.push_back("turn " + std::to_string(result.turns.size() + 1) +
                                              ": invalid orientation tag kept as text (" + tag.error + ")");
                }
            } else {
                result.warnings.push_back("turn " + std::to_string(result.turns.size() + 1) +
                                          ": unterminated orientation tag kept as text");
            }
        }

        const size_t sep = segment.find(scheme.speaker_separator);
        if (sep != std::string::npos && sep > 0) {
            turn.speaker = segment.substr(0, sep);
            turn.text = segment.substr(sep + scheme.speaker_separator.size());
        } else {
            turn.speaker = kUnknownSpeaker;
            turn.text = segment;
        }
        result.turns.push_back(std::move(turn));
    }
    return result;
}

TrainingPairSet build_training_pairs(const Dataset &d, const SerializationScheme &scheme,
                                     const KPolicy &policy) {
    scheme.validate();
    TrainingPairSet out;
    for (const auto &c : d.conversations) {
        const int n = static_cast<int>(c.turns.size());
        int k = 0;
        if (policy.kind == KPolicy::Kind::gold_prefix) {
            k = c.prefix_len;
        } else {
            k = policy.k;
            if (n <= k) {
                ++out.excluded;
                continue;
            }
        }
        if (k < 1 || k >= n) {
            ++out.excluded;
            continue;
        }

        TrainingPair pair;
        pair.conversation_id = c.id;
        pair.k_used = k;
        pair.context_text =
            serialize(std::vector<Turn>(c.turns.begin(), c.turns.begin() + k), scheme) +
            scheme.turn_delimiter;
        pair.target_text =
            serialize(std::vector<Turn>(c.turns.begin() + k, c.turns.end()), scheme) + "\n" +
            scheme.end_marker;
        out.pairs.push_back(std::move(pair));
    }
    return out;
}

ContinuationSet sample_continuations(const GeneratorBackend &generator, const Conversation &c, int k,
                                     int L, const GenerationParams &params,
                                     const SerializationScheme &scheme, uint64_t seed,
                                     int max_turns_cap) {
    if (k < 1 || k >= static_cast<int>(c.turns.size()))
        throw ArgumentError("sample_continuations: k must satisfy 1 <= k < n");
    if (L < 1)
        throw ArgumentError("sample_continuations: L must be >= 1");
    if (max_turns_cap < 1)
        throw ArgumentError("sample_continuations: max_turns_cap must be >= 1");
    params.validate();

    ContinuationSet cs;
    cs.conversation_id = c.id;
    cs.prefix_len = k;
    cs.params = params;
    cs.seed = seed;

    const std::vector<Turn> prefix(c.turns.begin(), c.turns.begin() + k);

    // Generates from the prefix, dropping oldest turns on context overflow.
    auto generate_once = [&](uint64_t sample_seed, std::vector<Turn> &turns_out) -> bool {
        int start = 0;
        while (start < k) {
            const std::vector<Turn> window(prefix.begin() + start, prefix.end());
            const std::string prompt = serialize(window, scheme) + scheme.turn_delimiter;
            try {
                const std::string raw = generator.generate(prompt, params, sample_seed);
                auto parsed = deserialize_continuation(raw, scheme);
                for (auto &w : parsed.warnings)
                    cs.warnings.push_back(c.id + ": " + w);
                if (static_cast<int>(parsed.turns.size()) > max_turns_cap)
                    parsed.turns.resize(static_cast<size_t>(max_turns_cap));
                turns_out = std::move(parsed.turns);
                return true;
            } catch (const ContextOverflowError &) {
                ++start;
            }
        }
        cs.warnings.push_back(c.id + ": prefix does not fit the generator context even after truncation");
        return false;
    };

    for (int i = 0; i < L; ++i) {
        std::vector<Turn> turns;
        bool ok = generate_once(seed + static_cast<uint64_t>(i), turns);
        if (ok && turns.empty()) {
            // Degenerate output (e.g. immediate end marker): resample once.
            ok = generate_once(seed + static_cast<uint64_t>(L + i), turns);
        }
        if (!ok || turns.empty()) {
            if (ok)
                cs.warnings.push_back(c.id + ": sample " + std::to_string(i) +
                                      " empty after resampling; using placeholder turn");
            turns = {Turn{kUnknownSpeaker, "", std::nullopt, std::nullopt}};
        }
        cs.continuations.push_back(std::move(turns));
    }
    return cs;
}

nlohmann::ordered_json continuation_set_to_json(const ContinuationSet &cs) {
    nlohmann::ordered_json j;
    j["conversation_id"] = cs.conversation_id;
    j["prefix_len"] = cs.prefix_len;
    j["seed"] = cs.seed;
    j["params"] = cs.params.to_json();
    nlohmann::ordered_json conts = nlohmann::ordered_json::array();
    for (const auto &turns : cs.continuations) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto &t : turns)
            arr.push_back(turn_to_json(t));
        conts.push_back(std::move(arr));
    }
    j["continuations"] = std::move(conts);
    return j;
}

ContinuationSet continuation_set_from_json(const nlohmann::json &j) {
    ContinuationSet cs;
    cs.conversation_id = j.at("conversation_id").get<std::string>();
    cs.prefix_len = j.at("prefix_len").get<int>();
    cs.seed = j.at("seed").get<uint64_t>();
    cs.params = GenerationParams::from_json(j.at("params"));
    for (const auto &arr : j.at("continuations")) {
        std::vector<Turn> turns;
        for (const auto &tj : arr)
            turns.push_back(turn_from_json(tj));
        cs.continuations.push_back(std::move(turns));
    }
    return cs;
}

void save_continuation_sets(const std::vector<ContinuationSet> &sets, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    for (const auto &cs : sets)
        out << continuation_set_to_json(cs).dump() << "\n";
}

std::vector<ContinuationSet> load_continuation_sets(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    std::vector<ContinuationSet> sets;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        try {
            sets.push_back(continuation_set_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }
    }
    return sets;
}

} // namespace derail
