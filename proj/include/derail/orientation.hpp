// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "derail/backend.hpp"
#include "derail/core.hpp"

namespace derail {

// --------------------------------------------------------------------------
// Few-shot annotation prompt. The template is a text file carrying the axis
// definitions, four worked example conversations, and a single literal
// placeholder that the target conversation is substituted into.
// --------------------------------------------------------------------------

struct AnnotationPromptTemplate {
    std::string text;
    std::string placeholder = "{Comments to Annotate}";

    // Exactly one placeholder occurrence; throws TemplateError otherwise.
    void validate() const;

    // Number of example conversations in the template (conversation headings
    // minus the target slot).
    int exemplar_count() const;

    static AnnotationPromptTemplate builtin();
    static AnnotationPromptTemplate from_file(const std::string &path);
};

// "Turn i: speaker: text" lines, one per turn, newlines in text collapsed to spaces.
std::string render_conversation_for_prompt(const Conversation &c);

// Template with the placeholder replaced by the rendered target conversation.
std::string build_annotation_prompt(const AnnotationPromptTemplate &tmpl, const Conversation &c);

// Annotation keyword in response style: first letter capitalized, hyphens for
// underscores ("open_minded" -> "Open-minded").
std::string display_keyword(std::string_view canonical);

// "Turn i: Power, Benevolence, Arousal, PoliticalLeaning" lines.
std::string render_annotation_response(const std::vector<OrientationLabel> &labels);

// Parses a model response into exactly n_turns labels. Lines that do not start
// with "Turn <i>:" are ignored as commentary. Keyword matching is
// case-insensitive with hyphen/underscore equivalence; a trailing period is
// tolerated. Anything else raises ParseError naming the turn and token.
std::vector<OrientationLabel> parse_annotation_response(const std::string &text, int n_turns);

// Copies c with an orientation label on every turn. Retries on parse failure
// up to max_retries additional attempts, then throws AnnotationError carrying
// the last parse failure. Transport errors propagate as BackendError.
Conversation annotate_conversation(AnnotationBackend &backend, const AnnotationPromptTemplate &tmpl,
                                   const Conversation &c, int max_retries);

// --------------------------------------------------------------------------
// Human agreement records and inter-annotator statistics
// --------------------------------------------------------------------------

enum class Judgment { agree, somewhat_agree, disagree, not_applicable };

std::string_view to_string(Judgment j);
std::optional<Judgment> parse_judgment(std::string_view s);

struct AgreementRecord {
    std::string conversation_id;
    int turn_index = 0;
    Axis axis = Axis::power;
    Judgment judgment = Judgment::agree;
    std::string annotator_id;

    bool operator==(const AgreementRecord &) const = default;
};

// CSV with header: conversation_id,turn_index,axis,judgment,annotator_id
std::vector<AgreementRecord> load_agreement_csv(const std::string &path);
void save_agreement_csv(const std::vector<AgreementRecord> &records, const std::string &path);

// One nominal rating of an item by an annotator, for Krippendorff's alpha.
struct Rating {
    std::string item;
    std::string annotator;
    std::string value;
};

// Nominal-data Krippendorff's alpha in [-1, 1]. Items rated by fewer than two
// annotators are excluded. Throws UndefinedStatisticError when no item has two
// or more ratings, or when expected disagreement is zero while observed is not.
double krippendorff_alpha(const std::vector<Rating> &ratings);

// Alpha over agreement judgments; items are (conversation, turn, axis) triples.
double krippendorff_alpha(const std::vector<AgreementRecord> &records);

struct AgreementSummary {
    std::map<Axis, std::map<Judgment, double>> per_axis; // proportions, sum to 1 per axis
    std::map<Judgment, double> overall;                  // proportions, sum to 1
    int n_records = 0;

    nlohmann::ordered_json to_json() const;
};

AgreementSummary agreement_summary(const std::vector<AgreementRecord> &records);

} // namespace derail
