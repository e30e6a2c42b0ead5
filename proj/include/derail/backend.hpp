// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "derail/core.hpp"

namespace derail {

// Whitespace word tokens. Toy backends operate at this granularity.
std::vector<std::string> split_whitespace(std::string_view text);

// --------------------------------------------------------------------------
// Sampling parameters
// --------------------------------------------------------------------------

struct GenerationParams {
    double temperature = 1.0;
    double top_p = 0.9;
    double repetition_penalty = 1.05;
    int max_new_tokens = 256;
    std::string stop_marker = "<END_OF_CONVERSATION>";

    // temperature > 0, top_p in (0,1], repetition_penalty >= 1, max_new_tokens > 0.
    void validate() const; // throws ConfigError

    nlohmann::ordered_json to_json() const;
    static GenerationParams from_json(const nlohmann::json &j);

    bool operator==(const GenerationParams &) const = default;
};

// --------------------------------------------------------------------------
// Backend interfaces
// --------------------------------------------------------------------------

struct GeneratorCaps {
    bool trainable = false;
    bool deterministic_given_seed = false;
};

class GeneratorBackend {
  public:
    virtual ~GeneratorBackend() = default;
    virtual GeneratorCaps caps() const = 0;
    // Maximum prompt length in whitespace tokens. Longer prompts raise
    // ContextOverflowError from generate(); callers drop oldest turns and retry.
    virtual size_t context_capacity() const = 0;
    virtual std::string generate(const std::string &prompt, const GenerationParams &params,
                                 uint64_t seed) const = 0;
};

class ClassifierBackend {
  public:
    virtual ~ClassifierBackend() = default;
    virtual bool trained() const = 0;
    // Maximum input length in whitespace tokens; scorers truncate to fit.
    virtual size_t context_capacity() const = 0;
    // Probability of derailment (the positive class). Throws StateError if untrained.
    virtual double predict_proba(const std::string &text) const = 0;
};

class AnnotationBackend {
  public:
    virtual ~AnnotationBackend() = default;
    // Returns the raw model response for an annotation prompt. May throw
    // BackendError. Rate limiting is the backend's business: annotate() may
    // block, and callers issue one in-flight request per conversation.
    virtual std::string annotate(const std::string &prompt) = 0;
};

// --------------------------------------------------------------------------
// Binary cross entropy, the classifier training criterion.
// --------------------------------------------------------------------------

// Single-example BCE with predictions clamped to [1e-12, 1 - 1e-12].
double bce(double p, bool y);
double mean_bce(const std::vector<double> &probs, const std::vector<bool> &labels);

// --------------------------------------------------------------------------
// Toy word-level bigram generator. Maximum-likelihood transition table with
// add-one smoothing over the observed vocabulary plus the stop marker.
// Deterministic given (prompt, params, seed).
// --------------------------------------------------------------------------

class BigramGenerator : public GeneratorBackend {
  public:
    explicit BigramGenerator(std::string stop_marker = "<END_OF_CONVERSATION>",
                             size_t context_capacity = 4096);

    void train(const std::vector<std::vector<std::string>> &corpus); // throws TrainingError on empty
    bool trained() const { return !vocab_.empty(); }

    GeneratorCaps caps() const override { return {true, true}; }
    size_t context_capacity() const override { return context_capacity_; }
    std::string generate(const std::string &prompt, const GenerationParams &params,
                         uint64_t seed) const override;

    // Smoothed P(token | prev) over the full vocabulary, before any sampling
    // transforms. Unseen prev yields the uniform smoothed distribution.
    std::vector<std::pair<std::string, double>> next_token_distribution(const std::string &prev) const;

    const std::string &stop_marker() const { return stop_marker_; }

    nlohmann::ordered_json to_json() const;
    static BigramGenerator from_json(const nlohmann::json &j);
    void save(const std::string &path) const;
    static BigramGenerator load(const std::string &path);

  private:
    std::vector<double> smoothed_row(int prev_index) const;
    int token_index(const std::string &token) const; // -1 if unknown

    std::string stop_marker_;
    size_t context_capacity_;
    std::vector<std::string> vocab_;
    std::map<std::string, int> vocab_index_;
    // Row -1 is the begin-of-sequence context; rows 0..V-1 are vocab tokens.
    std::vector<std::map<int, int>> counts_; // counts_[prev+1][next] = n
    std::vector<int> totals_;                // totals_[prev+1]
};

// Test/stub generator backed by a callback.
class ScriptedGenerator : public GeneratorBackend {
  public:
    using Fn = std::function<std::string(const std::string &, const GenerationParams &, uint64_t)>;

    explicit ScriptedGenerator(Fn fn, size_t context_capacity = 1 << 20, bool deterministic = true)
        : fn_(std::move(fn)), context_capacity_(context_capacity), deterministic_(deterministic) {}

    GeneratorCaps caps() const override { return {false, deterministic_}; }
    size_t context_capacity() const override { return context_capacity_; }
    std::string generate(const std::string &prompt, const GenerationParams &params,
                         uint64_t seed) const override;

  private:
    Fn fn_;
    size_t context_capacity_;
    bool deterministic_;
};

// --------------------------------------------------------------------------
// Toy bag-of-words logistic classifier trained with full-batch gradient
// descent on the BCE objective. Feature tokens are whitespace tokens
// lowercased with non-alphanumeric characters stripped.
// --------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 400;
    double learning_rate = 1.0;
    double l2 = 1e-4;

    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json &j);
};

struct TrainReport {
    int n_examples = 0;
    std::vector<double> loss_curve; // mean BCE per epoch
    double final_loss = 0.0;        // mean BCE on the training set after the last epoch
    double train_accuracy = 0.0;

    nlohmann::ordered_json to_json() const;
};

class BowClassifier : public ClassifierBackend {
  public:
    explicit BowClassifier(size_t context_capacity = 4096) : context_capacity_(context_capacity) {}

    // Feature normalization: per whitespace token, strip non-alphanumerics and lowercase.
    static std::vector<std::string> feature_tokens(const std::string &text);

    TrainReport train(const std::vector<std::pair<std::string, bool>> &examples,
                      const TrainConfig &config); // throws TrainingError if one class absent

    bool trained() const override { return trained_; }
    size_t context_capacity() const override { return context_capacity_; }
    double predict_proba(const std::string &text) const override;

    nlohmann::ordered_json to_json() const;
    static BowClassifier from_json(const nlohmann::json &j);
    void save(const std::string &path) const;
    static BowClassifier load(const std::string &path);

  private:
    size_t context_capacity_;
    bool trained_ = false;
    std::map<std::string, int> vocab_;
    std::vector<double> weights_;
    double bias_ = 0.0;
};

// Stub classifier: 1.0 if the text contains the trigger token, else 0.0.
class KeywordClassifier : public ClassifierBackend {
  public:
    explicit KeywordClassifier(std::string trigger, size_t context_capacity = 1 << 20)
        : trigger_(std::move(trigger)), context_capacity_(context_capacity) {}

    bool trained() const override { return true; }
    size_t context_capacity() const override { return context_capacity_; }
    double predict_proba(const std::string &text) const override;

  private:
    std::string trigger_;
    size_t context_capacity_;
};

// --------------------------------------------------------------------------
// External model server adapter. Line-delimited JSON over a subprocess pipe:
//   request  {"op": "generate"|"predict", "prompt"|"text", "params", "seed"}
//   response {"text": ...} or {"proba": ...} or {"error": {"kind", "message"}}
// --------------------------------------------------------------------------

class LineTransport {
  public:
    virtual ~LineTransport() = default;
    virtual std::string roundtrip(const std::string &request_line) = 0; // throws BackendError
};

// Spawns `command` via /bin/sh and speaks the protocol over its stdin/stdout.
class SubprocessTransport : public LineTransport {
  public:
    explicit SubprocessTransport(const std::string &command);
    ~SubprocessTransport() override;

    SubprocessTransport(const SubprocessTransport &) = delete;
    SubprocessTransport &operator=(const SubprocessTransport &) = delete;

    std::string roundtrip(const std::string &request_line) override;

  private:
    std::mutex mutex_;
    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string read_buffer_;
};

class ServerGenerator : public GeneratorBackend {
  public:
    ServerGenerator(std::shared_ptr<LineTransport> transport, size_t context_capacity = 1 << 20,
                    bool deterministic = false)
        : transport_(std::move(transport)), context_capacity_(context_capacity),
          deterministic_(deterministic) {}

    GeneratorCaps caps() const override { return {false, deterministic_}; }
    size_t context_capacity() const override { return context_capacity_; }
    std::string generate(const std::string &prompt, const GenerationParams &params,
                         uint64_t seed) const override;

  private:
    std::shared_ptr<LineTransport> transport_;
    size_t context_capacity_;
    bool deterministic_;
};

class ServerClassifier : public ClassifierBackend {
  public:
    explicit ServerClassifier(std::shared_ptr<LineTransport> transport, size_t context_capacity = 1 << 20)
        : transport_(std::move(transport)), context_capacity_(context_capacity) {}

    bool trained() const override { return true; }
    size_t context_capacity() const override { return context_capacity_; }
    double predict_proba(const std::string &text) const override;

  private:
    std::shared_ptr<LineTransport> transport_;
    size_t context_capacity_;
};

// Annotation over the same protocol, reusing the "generate" op (annotation is
// plain prompt completion).
class ServerAnnotator : public AnnotationBackend {
  public:
    explicit ServerAnnotator(std::shared_ptr<LineTransport> transport, GenerationParams params = {})
        : generator_(std::move(transport)), params_(std::move(params)) {}

    std::string annotate(const std::string &prompt) override {
        return generator_.generate(prompt, params_, 0);
    }

  private:
    ServerGenerator generator_;
    GenerationParams params_;
};

// Test/stub annotator backed by a callback.
class ScriptedAnnotator : public AnnotationBackend {
  public:
    using Fn = std::function<std::string(const std::string &)>;
    explicit ScriptedAnnotator(Fn fn) : fn_(std::move(fn)) {}
    std::string annotate(const std::string &prompt) override { return fn_(prompt); }

  private:
    Fn fn_;
};

// Deterministic rule-based annotator so the annotate pipeline runs without an
// LLM. Reads the target conversation back out of the prompt and labels each
// turn from surface cues.
class HeuristicAnnotator : public AnnotationBackend {
  public:
    std::string annotate(const std::string &prompt) override;
};

} // namespace derail
