// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "derail/errors.hpp"
#include "derail/rng.hpp"

namespace derail {

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
            ++i;
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
            ++i;
        if (i > start)
            tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

// --------------------------------------------------------------------------
// GenerationParams
// --------------------------------------------------------------------------

void GenerationParams::validate() const {
    if (!(temperature > 0))
        throw ConfigError("temperature must be > 0");
    if (!(top_p > 0 && top_p <= 1))
        throw ConfigError("top_p must be in (0, 1]");
    if (!(repetition_penalty >= 1))
        throw ConfigError("repetition_penalty must be >= 1");
    if (max_new_tokens <= 0)
        throw ConfigError("max_new_tokens must be positive");
    if (stop_marker.empty())
        throw ConfigError("stop_marker must be non-empty");
}

nlohmann::ordered_json GenerationParams::to_json() const {
    nlohmann::ordered_json j;
    j["temperature"] = temperature;
    j["top_p"] = top_p;
    j["repetition_penalty"] = repetition_penalty;
    j["max_new_tokens"] = max_new_tokens;
    j["stop_marker"] = stop_marker;
    return j;
}

GenerationParams GenerationParams::from_json(const nlohmann::json &j) {
    GenerationParams p;
    if (j.contains("temperature"))
        p.temperature = j.at("temperature").get<double>();
    if (j.contains("top_p"))
        p.top_p = j.at("top_p").get<double>();
    if (j.contains("repetition_penalty"))
        p.repetition_penalty = j.at("repetition_penalty").get<double>();
    if (j.contains("max_new_tokens"))
        p.max_new_tokens = j.at("max_new_tokens").get<int>();
    if (j.contains("stop_marker"))
        p.stop_marker = j.at("stop_marker").get<std::string>();
    p.validate();
    return p;
}

// --------------------------------------------------------------------------
// BCE
// --------------------------------------------------------------------------

double bce(double p, bool y) {
    const double eps = 1e-12;
    p = std::clamp(p, eps, 1.0 - eps);
    return y ? -std::log(p) : -std::log(1.0 - p);
}

double mean_bce(const std::vector<double> &probs, const std::vector<bool> &labels) {
    if (probs.size() != labels.size() || probs.empty())
        throw ArgumentError("mean_bce requires equal non-empty prediction and label lists");
    double total = 0.0;
    for (size_t i = 0; i < probs.size(); ++i)
        total += bce(probs[i], labels[i]);
    return total / static_cast<double>(probs.size());
}

// --------------------------------------------------------------------------
// BigramGenerator
// --------------------------------------------------------------------------

BigramGenerator::BigramGenerator(std::string stop_marker, size_t context_capacity)
    : stop_marker_(std::move(stop_marker)), context_capacity_(context_capacity) {}

void BigramGenerator::train(const std::vector<std::vector<std::string>> &corpus) {
    if (corpus.empty())
        throw TrainingError("bigram generator: training corpus is empty");

    std::set<std::string> vocab_set;
    vocab_set.insert(stop_marker_);
    for (const auto &seq : corpus)
        for (const auto &tok : seq)
            vocab_set.insert(tok);

    vocab_.assign(vocab_set.begin(), vocab_set.end());
    vocab_index_.clear();
    for (size_t i = 0; i < vocab_.size(); ++i)
        vocab_index_[vocab_[i]] = static_cast<int>(i);

    counts_.assign(vocab_.size() + 1, {});
    totals_.assign(vocab_.size() + 1, 0);
    for (const auto &seq : corpus) {
        int prev = -1; // begin-of-sequence context
        for (const auto &tok : seq) {
            const int cur = vocab_index_.at(tok);
            ++counts_[prev + 1][cur];
            ++totals_[prev + 1];
            prev = cur;
        }
    }
}

// Row indices: -1 is the begin-of-sequence context, -2 an unknown token.
int BigramGenerator::token_index(const std::string &token) const {
    auto it = vocab_index_.find(token);
    return it == vocab_index_.end() ? -2 : it->second;
}

std::vector<double> BigramGenerator::smoothed_row(int prev_index) const {
    const double v = static_cast<double>(vocab_.size());
    if (prev_index < -1) {
        // Unseen context: all counts zero, so add-one smoothing is uniform.
        return std::vector<double>(vocab_.size(), 1.0 / v);
    }
    std::vector<double> probs(vocab_.size(), 0.0);
    const auto &row = counts_[prev_index + 1];
    const double denom = static_cast<double>(totals_[prev_index + 1]) + v;
    for (size_t i = 0; i < vocab_.size(); ++i) {
        auto it = row.find(static_cast<int>(i));
        const double count = it == row.end() ? 0.0 : static_cast<double>(it->second);
        probs[i] = (count + 1.0) / denom;
    }
    return probs;
}

std::vector<std::pair<std::string, double>>
BigramGenerator::next_token_distribution(const std::string &prev) const {
    if (!trained())
        throw StateError("bigram generator is not trained");
    const auto probs = smoothed_row(token_index(prev));
    std::vector<std::pair<std::string, double>> out;
    out.reserve(probs.size());
    for (size_t i = 0; i < probs.size(); ++i)
        out.emplace_back(vocab_[i], probs[i]);
    return out;
}

namespace {

// One sampling step: temperature scaling, then nucleus (top_p) filtering, then
// repetition-penalty down-weighting of already-emitted tokens, in that order.
size_t sample_token(const std::vector<double> &raw_probs, const GenerationParams &params,
                    const std::set<size_t> &emitted, Rng &rng) {
    const size_t v = raw_probs.size();

    // p^(1/T) in log space.
    std::vector<double> scaled(v);
    double max_log = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < v; ++i) {
        scaled[i] = std::log(raw_probs[i]) / params.temperature;
        max_log = std::max(max_log, scaled[i]);
    }
    double sum = 0.0;
    for (size_t i = 0; i < v; ++i) {
        scaled[i] = std::exp(scaled[i] - max_log);
        sum += scaled[i];
    }
    for (auto &p : scaled)
        p /= sum;

    // Nucleus: smallest prefix of the sorted distribution reaching top_p.
    std::vector<size_t> order(v);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scaled[a] > scaled[b]; });
    std::vector<size_t> nucleus;
    double cum = 0.0;
    for (size_t idx : order) {
        nucleus.push_back(idx);
        cum += scaled[idx];
        if (cum >= params.top_p - 1e-12)
            break;
    }

    // Penalize tokens already emitted in this generation.
    std::vector<double> weights(nucleus.size());
    double total = 0.0;
    for (size_t i = 0; i < nucleus.size(); ++i) {
        double w = scaled[nucleus[i]];
        if (emitted.count(nucleus[i]))
            w /= params.repetition_penalty;
        weights[i] = w;
        total += w;
    }

    const double u = rng.next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i < nucleus.size(); ++i) {
        acc += weights[i];
        if (u < acc)
            return nucleus[i];
    }
    return nucleus.back();
}

} // namespace

std::string BigramGenerator::generate(const std::string &prompt, const GenerationParams &params,
                                      uint64_t seed) const {
    if (!trained())
        throw StateError("bigram generator is not trained");
    params.validate();

    const auto prompt_tokens = split_whitespace(prompt);
    if (prompt_tokens.size() > context_capacity_)
        throw ContextOverflowError("prompt of " + std::to_string(prompt_tokens.size()) +
                                   " tokens exceeds context capacity of " +
                                   std::to_string(context_capacity_));

    Rng rng(seed);
    int prev = prompt_tokens.empty() ? -1 : token_index(prompt_tokens.back());
    std::set<size_t> emitted;
    std::vector<std::string> out;

    for (int step = 0; step < params.max_new_tokens; ++step) {
        const auto probs = smoothed_row(prev);
        const size_t idx = sample_token(probs, params, emitted, rng);
        emitted.insert(idx);
        out.push_back(vocab_[idx]);
        if (vocab_[idx] == params.stop_marker)
            break;
        prev = static_cast<int>(idx);
    }

    std::string text;
    for (size_t i = 0; i < out.size(); ++i) {
        if (i)
            text += ' ';
        text += out[i];
    }
    return text;
}

nlohmann::ordered_json BigramGenerator::to_json() const {
    nlohmann::ordered_json j;
    j["type"] = "bigram";
    j["stop_marker"] = stop_marker_;
    j["context_capacity"] = context_capacity_;
    j["vocab"] = vocab_;
    nlohmann::ordered_json triples = nlohmann::ordered_json::array();
    for (size_t prev = 0; prev < counts_.size(); ++prev)
        for (const auto &[next, count] : counts_[prev])
            triples.push_back({static_cast<int>(prev) - 1, next, count});
    j["counts"] = std::move(triples);
    return j;
}

BigramGenerator BigramGenerator::from_json(const nlohmann::json &j) {
    if (j.value("type", "") != "bigram")
        throw ParseError("not a bigram generator model");
    BigramGenerator g(j.at("stop_marker").get<std::string>(), j.at("context_capacity").get<size_t>());
    g.vocab_ = j.at("vocab").get<std::vector<std::string>>();
    for (size_t i = 0; i < g.vocab_.size(); ++i)
        g.vocab_index_[g.vocab_[i]] = static_cast<int>(i);
    g.counts_.assign(g.vocab_.size() + 1, {});
    g.totals_.assign(g.vocab_.size() + 1, 0);
    for (const auto &triple : j.at("counts")) {
        const int prev = triple.at(0).get<int>();
        const int next = triple.at(1).get<int>();
        const int count = triple.at(2).get<int>();
        g.counts_[prev + 1][next] = count;
        g.totals_[prev + 1] += count;
    }
    return g;
}

void BigramGenerator::save(const std::string &path) const {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out << to_json().dump(2) << "\n";
}

BigramGenerator BigramGenerator::load(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

std::string ScriptedGenerator::generate(const std::string &prompt, const GenerationParams &params,
                                        uint64_t seed) const {
    const auto prompt_tokens = split_whitespace(prompt);
    if (prompt_tokens.size() > context_capacity_)
        throw ContextOverflowError("prompt of " + std::to_string(prompt_tokens.size()) +
                                   " tokens exceeds context capacity of " +
                                   std::to_string(context_capacity_));
    return fn_(prompt, params, seed);
}

// --------------------------------------------------------------------------
// BowClassifier
// --------------------------------------------------------------------------

std::vector<std::string> BowClassifier::feature_tokens(const std::string &text) {
    std::vector<std::string> features;
    for (const auto &raw : split_whitespace(text)) {
        std::string tok;
        for (char c : raw) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        if (!tok.empty())
            features.push_back(std::move(tok));
    }
    return features;
}

TrainReport BowClassifier::train(const std::vector<std::pair<std::string, bool>> &examples,
                                 const TrainConfig &config) {
    bool has_pos = false, has_neg = false;
    for (const auto &[text, label] : examples)
        (label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw TrainingError("classifier training requires both classes");

    vocab_.clear();
    std::vector<std::vector<int>> feats(examples.size());
    for (size_t i = 0; i < examples.size(); ++i) {
        std::set<int> present; // presence features
        for (const auto &tok : feature_tokens(examples[i].first)) {
            auto [it, inserted] = vocab_.try_emplace(tok, static_cast<int>(vocab_.size()));
            present.insert(it->second);
        }
        feats[i].assign(present.begin(), present.end());
    }

    const size_t m = examples.size();
    weights_.assign(vocab_.size(), 0.0);
    bias_ = 0.0;
    trained_ = true;

    TrainReport report;
    report.n_examples = static_cast<int>(m);

    std::vector<double> probs(m);
    std::vector<bool> labels(m);
    for (size_t i = 0; i < m; ++i)
        labels[i] = examples[i].second;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<double> grad_w(weights_.size(), 0.0);
        double grad_b = 0.0;
        for (size_t i = 0; i < m; ++i) {
            double z = bias_;
            for (int f : feats[i])
                z += weights_[f];
            const double p = 1.0 / (1.0 + std::exp(-z));
            probs[i] = p;
            const double delta = p - (labels[i] ? 1.0 : 0.0);
            for (int f : feats[i])
                grad_w[f] += delta;
            grad_b += delta;
        }
        const double scale = config.learning_rate / static_cast<double>(m);
        for (size_t f = 0; f < weights_.size(); ++f)
            weights_[f] -= scale * grad_w[f] + config.learning_rate * config.l2 * weights_[f];
        bias_ -= scale * grad_b;
        report.loss_curve.push_back(mean_bce(probs, labels));
    }

    int correct = 0;
    for (size_t i = 0; i < m; ++i) {
        probs[i] = predict_proba(examples[i].first);
        if ((probs[i] >= 0.5) == labels[i])
            ++correct;
    }
    report.final_loss = mean_bce(probs, labels);
    report.train_accuracy = static_cast<double>(correct) / static_cast<double>(m);
    return report;
}

double BowClassifier::predict_proba(const std::string &text) const {
    if (!trained_)
        throw StateError("classifier is not trained");
    double z = bias_;
    std::set<int> present;
    for (const auto &tok : feature_tokens(text)) {
        auto it = vocab_.find(tok);
        if (it != vocab_.end())
            present.insert(it->second);
    }
    for (int f : present)
        z += weights_[f];
    return 1.0 / (1.0 + std::exp(-z));
}

nlohmann::ordered_json BowClassifier::to_json() const {
    nlohmann::ordered_json j;
    j["type"] = "bow";
    j["context_capacity"] = context_capacity_;
    j["bias"] = bias_;
    nlohmann::ordered_json vocab = nlohmann::ordered_json::array();
    std::vector<const std::string *> by_index(vocab_.size());
    for (const auto &[tok, idx] : vocab_)
        by_index[idx] = &tok;
    for (size_t i = 0; i < by_index.size(); ++i)
        vocab.push_back({*by_index[i], weights_[i]});
    j["features"] = std::move(vocab);
    return j;
}

BowClassifier BowClassifier::from_json(const nlohmann::json &j) {
    if (j.value("type", "") != "bow")
        throw ParseError("not a bag-of-words classifier model");
    BowClassifier c(j.at("context_capacity").get<size_t>());
    c.bias_ = j.at("bias").get<double>();
    for (const auto &entry : j.at("features")) {
        c.vocab_[entry.at(0).get<std::string>()] = static_cast<int>(c.weights_.size());
        c.weights_.push_back(entry.at(1).get<double>());
    }
    c.trained_ = true;
    return c;
}

void BowClassifier::save(const std::string &path) const {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out << to_json().dump(2) << "\n";
}

BowClassifier BowClassifier::load(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

double KeywordClassifier::predict_proba(const std::string &text) const {
    const auto features = BowClassifier::feature_tokens(text);
    const auto trigger = BowClassifier::feature_tokens(trigger_);
    if (trigger.empty())
        return 0.0;
    for (const auto &tok : features)
        if (tok == trigger.front())
            return 1.0;
    return 0.0;
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["learning_rate"] = learning_rate;
    j["l2"] = l2;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json &j) {
    TrainConfig c;
    if (j.contains("epochs"))
        c.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate"))
        c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("l2"))
        c.l2 = j.at("l2").get<double>();
    return c;
}

nlohmann::ordered_json TrainReport::to_json() const {
    nlohmann::ordered_json j;
    j["n_examples"] = n_examples;
    j["final_loss"] = final_loss;
    j["train_accuracy"] = train_accuracy;
    j["loss_curve"] = loss_curve;
    return j;
}

// --------------------------------------------------------------------------
// Subprocess transport
// --------------------------------------------------------------------------

SubprocessTransport::SubprocessTransport(const std::string &command) {
    int to_pipe[2];
    int from_pipe[2];
    if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0)
        throw BackendError("failed to create pipes for '" + command + "'");

    const pid_t pid = fork();
    if (pid < 0)
        throw BackendError("failed to fork for '" + command + "'");
    if (pid == 0) {
        dup2(to_pipe[0], STDIN_FILENO);
        dup2(from_pipe[1], STDOUT_FILENO);
        close(to_pipe[0]);
        close(to_pipe[1]);
        close(from_pipe[0]);
        close(from_pipe[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char *>(nullptr));
        _exit(127);
    }
    close(to_pipe[0]);
    close(from_pipe[1]);
    child_pid_ = pid;
    to_child_ = to_pipe[1];
    from_child_ = from_pipe[0];
}

SubprocessTransport::~SubprocessTransport() {
    if (to_child_ >= 0)
        close(to_child_);
    if (from_child_ >= 0)
        close(from_child_);
    if (child_pid_ > 0) {
        int status = 0;
        waitpid(child_pid_, &status, 0);
    }
}

std::string SubprocessTransport::roundtrip(const std::string &request_line) {
    std::lock_guard<std::mutex> lock(mutex_);

    std::string line = request_line;
    line.push_back('\n');
    size_t written = 0;
    while (written < line.size()) {
        const ssize_t n = write(to_child_, line.data() + written, line.size() - written);
        if (n <= 0)
            throw BackendError("server transport: write failed (server gone?)");
        written += static_cast<size_t>(n);
    }

    for (;;) {
        const size_t newline = read_buffer_.find('\n');
        if (newline != std::string::npos) {
            std::string result = read_buffer_.substr(0, newline);
            read_buffer_.erase(0, newline + 1);
            return result;
        }
        char buf[4096];
        const ssize_t n = read(from_child_, buf, sizeof(buf));
        if (n <= 0)
            throw BackendError("server transport: read failed (server gone?)");
        read_buffer_.append(buf, static_cast<size_t>(n));
    }
}

namespace {

nlohmann::json server_roundtrip(LineTransport &transport, const nlohmann::ordered_json &request) {
    nlohmann::json response;
    try {
        response = nlohmann::json::parse(transport.roundtrip(request.dump()));
    } catch (const nlohmann::json::exception &e) {
        throw BackendError(std::string("server transport: bad response: ") + e.what());
    }
    if (response.contains("error")) {
        const auto &err = response.at("error");
        const std::string kind = err.value("kind", "");
        const std::string message = err.value("message", "server error");
        if (kind == "context_overflow")
            throw ContextOverflowError(message);
        throw BackendError(message);
    }
    return response;
}

} // namespace

std::string ServerGenerator::generate(const std::string &prompt, const GenerationParams &params,
                                      uint64_t seed) const {
    const auto prompt_tokens = split_whitespace(prompt);
    if (prompt_tokens.size() > context_capacity_)
        throw ContextOverflowError("prompt of " + std::to_string(prompt_tokens.size()) +
                                   " tokens exceeds context capacity of " +
                                   std::to_string(context_capacity_));
    nlohmann::ordered_json request;
    request["op"] = "generate";
    request["prompt"] = prompt;
    request["params"] = params.to_json();
    request["seed"] = seed;
    const auto response = server_roundtrip(*transport_, request);
    if (!response.contains("text"))
        throw BackendError("server transport: generate response lacks 'text'");
    return response.at("text").get<std::string>();
}

double ServerClassifier::predict_proba(const std::string &text) const {
    nlohmann::ordered_json request;
    request["op"] = "predict";
    request["text"] = text;
    request["seed"] = 0;
    const auto response = server_roundtrip(*transport_, request);
    if (!response.contains("proba"))
        throw BackendError("server transport: predict response lacks 'proba'");
    const double p = response.at("proba").get<double>();
    if (p < 0.0 || p > 1.0)
        throw BackendError("server transport: proba out of [0,1]");
    return p;
}

// --------------------------------------------------------------------------
// HeuristicAnnotator
// --------------------------------------------------------------------------

namespace {

bool contains_word(const std::vector<std::string> &tokens, std::string_view word) {
    for (const auto &t : tokens)
        if (t == word)
            return true;
    return false;
}

} // namespace

std::string HeuristicAnnotator::annotate(const std::string &prompt) {
    // The target conversation is the last run of "Turn i: ..." lines in the prompt.
    std::vector<std::string> lines;
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);

    std::vector<std::string> target;
    std::vector<std::string> current;
    int expected = 1;
    for (const auto &l : lines) {
        const std::string t = trim(l);
        if (t.rfind("Turn " + std::to_string(expected) + ":", 0) == 0) {
            current.push_back(t);
            ++expected;
        } else if (t.rfind("Turn 1:", 0) == 0) {
            current.clear();
            current.push_back(t);
            expected = 2;
        } else if (!current.empty()) {
            target = current;
            current.clear();
            expected = 1;
        }
    }
    if (!current.empty())
        target = current;

    std::string out;
    for (size_t i = 0; i < target.size(); ++i) {
        const std::string &l = target[i];
        const auto tokens = BowClassifier::feature_tokens(l);
        const bool exclaim = l.find('!') != std::string::npos;
        const bool question = l.find('?') != std::string::npos;
        const bool warm = contains_word(tokens, "thanks") || contains_word(tokens, "thank") ||
                          contains_word(tokens, "glad") || contains_word(tokens, "appreciate");
        const bool sharp = contains_word(tokens, "wrong") || contains_word(tokens, "stop") ||
                           contains_word(tokens, "no");

        const char *power = question ? "Open-minded" : (sharp ? "Assertive" : "Neutral");
        const char *benevolence = warm ? "Supportive" : (sharp ? "Confrontational" : "Neutral");
        const char *arousal = exclaim ? "Energetic" : "Calm";
        const char *political = "Neutral";

        out += "Turn " + std::to_string(i + 1) + ": " + power + ", " + benevolence + ", " +
               arousal + ", " + political + "\n";
    }
    return out;
}

} // namespace derail
