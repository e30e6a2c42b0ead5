// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/classifier.hpp"

#include <fstream>

#include "derail/errors.hpp"

namespace derail {

std::string_view to_string(Provenance p) {
    return p == Provenance::real_future ? "real_future" : "synthetic_future";
}

std::optional<Provenance> parse_provenance(std::string_view s) {
    if (s == "real_future")
        return Provenance::real_future;
    if (s == "synthetic_future")
        return Provenance::synthetic_future;
    return std::nullopt;
}

nlohmann::ordered_json AugmentReport::to_json() const {
    nlohmann::ordered_json j;
    j["real_examples"] = real_examples;
    j["synthetic_examples"] = synthetic_examples;
    j["dropped"] = dropped;
    j["gold_orientation_on_real_futures"] = gold_orientation_on_real_futures;
    j["warnings"] = warnings;
    return j;
}

std::vector<AugmentedExample> augment_training_set(const Dataset &d, const GeneratorBackend &generator,
                                                   const SerializationScheme &scheme, int l,
                                                   const GenerationParams &params, uint64_t seed,
                                                   AugmentReport *report) {
    if (l < 0)
        throw ArgumentError("augment_training_set: l must be >= 0");
    scheme.validate();

    AugmentReport local;
    AugmentReport &rep = report ? *report : local;
    // Real futures keep whatever orientation labels the dataset carries.
    rep.gold_orientation_on_real_futures = scheme.include_orientation;

    std::vector<AugmentedExample> out;
    out.reserve(d.conversations.size() * static_cast<size_t>(1 + l));

    for (size_t i = 0; i < d.conversations.size(); ++i) {
        const Conversation &c = d.conversations[i];
        const bool gold = (c.outcome == Outcome::derailed);

        AugmentedExample real;
        real.conversation_id = c.id;
        real.text = serialize(c.turns, scheme);
        real.label = gold;
        real.provenance = Provenance::real_future;
        out.push_back(std::move(real));
        ++rep.real_examples;

        if (l == 0)
            continue;

        const uint64_t conv_seed = seed + static_cast<uint64_t>(i) * kAugmentSeedStride;
        try {
            const auto cs = sample_continuations(generator, c, c.prefix_len, l, params, scheme, conv_seed);
            for (const auto &w : cs.warnings)
                rep.warnings.push_back(w);
            const std::vector<Turn> prefix(c.turns.begin(), c.turns.begin() + c.prefix_len);
            for (int g = 0; g < l; ++g) {
                std::vector<Turn> full = prefix;
                full.insert(full.end(), cs.continuations[static_cast<size_t>(g)].begin(),
                            cs.continuations[static_cast<size_t>(g)].end());
                AugmentedExample synth;
                synth.conversation_id = c.id;
                // Generated turns keep whatever tags they carried; missing
                // tags are omitted rather than treated as errors.
                synth.text = serialize(full, scheme, MissingLabel::skip_tag);
                synth.label = gold; // supervised by the gold outcome regardless of content
                synth.provenance = Provenance::synthetic_future;
                synth.generation_index = g;
                out.push_back(std::move(synth));
                ++rep.synthetic_examples;
            }
        } catch (const Error &e) {
            rep.dropped += l;
            rep.warnings.push_back(c.id + ": synthetic futures dropped: " + e.what());
        }
    }
    return out;
}

TrainReport train_derailment_classifier(BowClassifier &backend,
                                        const std::vector<AugmentedExample> &examples,
                                        const TrainConfig &config) {
    std::vector<std::pair<std::string, bool>> pairs;
    pairs.reserve(examples.size());
    for (const auto &e : examples)
        pairs.emplace_back(e.text, e.label);
    return backend.train(pairs, config);
}

double score(const ClassifierBackend &backend, const Conversation &c,
             const std::vector<Turn> &continuation, const SerializationScheme &scheme, int k,
             int *truncated_turns) {
    if (!backend.trained())
        throw StateError("classifier is not trained");
    if (k < 0)
        k = c.prefix_len;
    if (k < 1 || k > static_cast<int>(c.turns.size()))
        throw ArgumentError("score: history length out of range");

    std::vector<Turn> turns(c.turns.begin(), c.turns.begin() + k);
    turns.insert(turns.end(), continuation.begin(), continuation.end());

    // Drop whole turns from the front (oldest first) until the text fits.
    // Generated continuation turns may lack orientation tags; scoring must not
    // abort on them, so missing tags are omitted.
    int dropped = 0;
    size_t start = 0;
    std::string text = serialize(turns, scheme, MissingLabel::skip_tag);
    while (split_whitespace(text).size() > backend.context_capacity() && start + 1 < turns.size()) {
        ++start;
        ++dropped;
        text = serialize(std::vector<Turn>(turns.begin() + start, turns.end()), scheme,
                         MissingLabel::skip_tag);
    }
    if (truncated_turns)
        *truncated_turns = dropped;
    return backend.predict_proba(text);
}

void save_augmented_examples(const std::vector<AugmentedExample> &examples, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    for (const auto &e : examples) {
        nlohmann::ordered_json j;
        j["conversation_id"] = e.conversation_id;
        j["provenance"] = to_string(e.provenance);
        j["generation_index"] =
            e.generation_index ? nlohmann::ordered_json(*e.generation_index) : nlohmann::ordered_json(nullptr);
        j["label"] = e.label;
        j["text"] = e.text;
        out << j.dump() << "\n";
    }
}

std::vector<AugmentedExample> load_augmented_examples(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    std::vector<AugmentedExample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            AugmentedExample e;
            e.conversation_id = j.at("conversation_id").get<std::string>();
            const auto prov = parse_provenance(j.at("provenance").get<std::string>());
            if (!prov)
                throw ParseError(path + ":" + std::to_string(line_no) + ": unknown provenance");
            e.provenance = *prov;
            if (!j.at("generation_index").is_null())
                e.generation_index = j.at("generation_index").get<int>();
            e.label = j.at("label").get<bool>();
            e.text = j.at("text").get<std::string>();
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception &ex) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + ex.what());
        }
    }
    return out;
}

} // namespace derail
