#pragma once
// Tabular question-answering model and the partial-collapse unlearning
// loop. Each question carries a finite answer vocabulary and a
// categorical conditional over it. Forget questions are updated toward
// the empirical distribution of curated self-generated answers (rewards
// r(x) = 1 - ROUGE-L(x, ground truth); the ground truth itself is never
// a refit target). Retain questions are pulled toward one-hot ground
// truth with weight lambda * eta.
//
// Dataset file format (one [question] block per question):
//   [question]
//   id = f01
//   set = forget            # retain | forget | heldout
//   text = ...              # optional, informational
//   answer = ...            # ground-truth answer
//   paraphrase = ...        # forget questions: paraphrased reference
//   vocab = ...             # repeated; must include the answer

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "collapse/categorical.hpp"
#include "collapse/config.hpp"
#include "collapse/curation.hpp"
#include "collapse/rng.hpp"
#include "collapse/rouge.hpp"

namespace collapse {

enum class QaSet { retain, forget, heldout };

inline const char* to_string(QaSet set) {
    switch (set) {
        case QaSet::retain: return "retain";
        case QaSet::forget: return "forget";
        case QaSet::heldout: return "heldout";
    }
    return "?";
}

struct QaEntry {
    std::string id;
    QaSet set = QaSet::retain;
    std::string text;
    TokenSequence answer;  // ground truth
    std::optional<TokenSequence> paraphrase_reference;
    std::vector<TokenSequence> vocab;

    std::size_t answer_index() const {
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            if (vocab[i] == answer) return i;
        }
        throw std::invalid_argument("QaEntry " + id + ": vocabulary does not contain the answer");
    }
};

class QaDataset {
public:
    explicit QaDataset(std::vector<QaEntry> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (!index_.emplace(e.id, i).second) {
                throw std::invalid_argument("QaDataset: duplicate question id " + e.id);
            }
            switch (e.set) {
                case QaSet::retain: retain_.push_back(i); break;
                case QaSet::forget: forget_.push_back(i); break;
                case QaSet::heldout: heldout_.push_back(i); break;
            }
        }
    }

    const std::vector<QaEntry>& entries() const { return entries_; }
    const std::vector<std::size_t>& retain_indices() const { return retain_; }
    const std::vector<std::size_t>& forget_indices() const { return forget_; }
    const std::vector<std::size_t>& heldout_indices() const { return heldout_; }

    const QaEntry& by_id(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) {
            throw std::invalid_argument("QaDataset: unknown question id " + id);
        }
        return entries_[it->second];
    }

private:
    std::vector<QaEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::size_t> retain_;
    std::vector<std::size_t> forget_;
    std::vector<std::size_t> heldout_;
};

inline QaDataset parse_qa_dataset(const ConfigDoc& doc, std::string_view origin = "<dataset>") {
    ConfigIssues issues;
    std::vector<QaEntry> entries;
    const auto blocks = doc.all("question");
    if (blocks.empty()) {
        issues.add(std::string(origin) + ": no [question] blocks");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        SectionView view(blocks[b], "[question #" + std::to_string(b + 1) + "]", issues);
        QaEntry entry;
        if (auto id = view.required_text("id")) entry.id = *id;
        entry.text = view.text("text", "");
        const std::string set_name = view.text("set", "");
        if (set_name == "retain") {
            entry.set = QaSet::retain;
        } else if (set_name == "forget") {
            entry.set = QaSet::forget;
        } else if (set_name == "heldout") {
            entry.set = QaSet::heldout;
        } else {
            view.reject("set", "expected retain/forget/heldout");
        }
        if (auto answer = view.required_text("answer")) {
            entry.answer = tokenize(*answer);
            if (entry.answer.empty()) view.reject("answer", "tokenizes to nothing");
        }
        if (auto para = view.raw("paraphrase")) {
            entry.paraphrase_reference = tokenize(*para);
            if (entry.paraphrase_reference->empty()) {
                view.reject("paraphrase", "tokenizes to nothing");
            }
        }
        for (const auto& v : view.raw_list("vocab")) {
            entry.vocab.push_back(tokenize(v));
        }
        if (entry.vocab.empty()) view.reject("vocab", "required");
        const bool has_answer = std::any_of(entry.vocab.begin(), entry.vocab.end(),
                                            [&](const TokenSequence& t) {
                                                return t == entry.answer;
                                            });
        if (!entry.vocab.empty() && !has_answer) {
            view.reject("vocab", "does not contain the answer");
        }
        entries.push_back(std::move(entry));
    }
    issues.raise_if_any();
    try {
        return QaDataset(std::move(entries));
    } catch (const std::invalid_argument& err) {
        throw ConfigError({std::string(origin) + ": " + err.what()});
    }
}

inline QaDataset load_qa_dataset(const std::string& path) {
    return parse_qa_dataset(ConfigDoc::parse_file(path), path);
}

class TabularQaModel {
public:
    struct Question {
        std::string id;
        std::vector<TokenSequence> answers;
        Categorical conditional;
    };

    explicit TabularQaModel(std::vector<Question> questions) : questions_(std::move(questions)) {
        for (std::size_t i = 0; i < questions_.size(); ++i) {
            if (questions_[i].answers.size() != questions_[i].conditional.size()) {
                throw std::invalid_argument("TabularQaModel: vocab/conditional size mismatch");
            }
            if (!index_.emplace(questions_[i].id, i).second) {
                throw std::invalid_argument("TabularQaModel: duplicate question id");
            }
        }
    }

    const std::vector<Question>& questions() const { return questions_; }

    const Question& question(const std::string& id) const {
        return questions_[index_of(id)];
    }

    const Categorical& conditional(const std::string& id) const {
        return question(id).conditional;
    }

    void set_conditional(const std::string& id, Categorical dist) {
        auto& q = questions_[index_of(id)];
        if (dist.size() != q.answers.size()) {
            throw std::invalid_argument("TabularQaModel: conditional size mismatch");
        }
        q.conditional = std::move(dist);
    }

private:
    std::size_t index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) {
            throw std::invalid_argument("TabularQaModel: unknown question id " + id);
        }
        return it->second;
    }

    std::vector<Question> questions_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Memorized starting model: every conditional puts 1 - noise on the
// ground truth and spreads noise uniformly over the distractors.
inline TabularQaModel init_memorized_model(const QaDataset& dataset, double noise,
                                           [[maybe_unused]] Rng& rng) {
    if (!(noise >= 0.0 && noise < 1.0)) {
        throw std::invalid_argument("init_memorized_model: noise must be in [0, 1)");
    }
    std::vector<TabularQaModel::Question> questions;
    questions.reserve(dataset.entries().size());
    for (const auto& entry : dataset.entries()) {
        const std::size_t truth = entry.answer_index();
        const std::size_t distractors = entry.vocab.size() - 1;
        if (distractors < 3) {
            throw std::invalid_argument("init_memorized_model: question " + entry.id +
                                        " needs at least 3 distractors");
        }
        std::vector<double> probs(entry.vocab.size(),
                                  noise / static_cast<double>(distractors));
        probs[truth] = 1.0 - noise;
        questions.push_back({entry.id, entry.vocab, Categorical(std::move(probs))});
    }
    return TabularQaModel(std::move(questions));
}

struct PmcConfig {
    double lambda = 1.0;             // retain weight
    std::uint64_t n_samples = 10;    // candidates per forget question
    std::uint64_t m_curated = 1000;  // curated draws per forget question per iteration
    SelectorSpec selector = SelectorSpec::argmax();
    std::size_t iterations = 1;
    double eta = 1.0;  // refit step size in (0, 1]

    void validate() const {
        if (!(lambda >= 0.0)) throw std::invalid_argument("PmcConfig: lambda must be >= 0");
        if (n_samples < 1) throw std::invalid_argument("PmcConfig: n_samples must be >= 1");
        if (m_curated < 1) throw std::invalid_argument("PmcConfig: m_curated must be >= 1");
        if (!(eta > 0.0 && eta <= 1.0)) {
            throw std::invalid_argument("PmcConfig: eta must be in (0, 1]");
        }
        if (iterations < 1) throw std::invalid_argument("PmcConfig: iterations must be >= 1");
        if (selector.kind == SelectorSpec::Kind::bradley_terry && !(selector.tau > 0.0)) {
            throw std::invalid_argument("PmcConfig: tau must be > 0");
        }
    }
};

// Unlearning rewards for every vocabulary answer of one question.
inline std::vector<double> answer_rewards(const QaEntry& entry) {
    std::vector<double> rewards;
    rewards.reserve(entry.vocab.size());
    for (const auto& answer : entry.vocab) {
        rewards.push_back(unlearn_reward(answer, entry.answer));
    }
    return rewards;
}

namespace detail {

inline Categorical mix_toward(const Categorical& current, const Categorical& target,
                              double weight) {
    if (weight <= 0.0) return current;
    if (weight >= 1.0) return target;
    std::vector<double> probs(current.size());
    for (std::size_t k = 0; k < current.size(); ++k) {
        probs[k] = (1.0 - weight) * current[k] + weight * target[k];
    }
    return Categorical(std::move(probs));
}

}  // namespace detail

// One unlearning iteration. All candidates are sampled from the model
// snapshot passed in (never from a partially updated model); the updated
// model is returned.
inline TabularQaModel pmc_unlearn_step(const TabularQaModel& model, const QaDataset& dataset,
                                       const PmcConfig& config, Rng& rng) {
    config.validate();
    TabularQaModel next = model;

    for (const std::size_t idx : dataset.forget_indices()) {
        const QaEntry& entry = dataset.entries()[idx];
        const Categorical& current = model.conditional(entry.id);
        const Categorical curated = curated_refit_step(
            current, answer_rewards(entry), config.n_samples, config.m_curated,
            config.selector, rng);
        next.set_conditional(entry.id, detail::mix_toward(current, curated, config.eta));
    }

    const double retain_weight = std::min(1.0, config.lambda * config.eta);
    if (retain_weight > 0.0) {
        for (const std::size_t idx : dataset.retain_indices()) {
            const QaEntry& entry = dataset.entries()[idx];
            const Categorical& current = model.conditional(entry.id);
            const Categorical target =
                Categorical::one_hot(entry.vocab.size(), entry.answer_index());
            next.set_conditional(entry.id, detail::mix_toward(current, target, retain_weight));
        }
    }
    return next;
}

// Argmax answer of the conditional, first index on ties.
inline const TokenSequence& greedy_answer(const TabularQaModel& model, const std::string& id) {
    const auto& q = model.question(id);
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.conditional.size(); ++i) {
        if (q.conditional[i] > q.conditional[best]) best = i;
    }
    return q.answers[best];
}

struct MetricsReport {
    double score_forget = 0.0;
    double score_paraphrased = 0.0;
    double score_retain = 0.0;
    double score_heldout = 0.0;
    double unlearn_quality = 0.0;  // 2 - (forget + paraphrased), in [0, 2]
    double utility = 0.0;          // retain + heldout, in [0, 2]
};

// Per-set mean recall ROUGE-L of greedy answers. The paraphrased-forget
// set reuses the forget questions' greedy outputs against the
// paraphrased references.
inline MetricsReport evaluate_metrics(const TabularQaModel& model, const QaDataset& dataset) {
    MetricsReport report;

    double forget_sum = 0.0;
    double paraphrase_sum = 0.0;
    std::size_t paraphrase_count = 0;
    if (dataset.forget_indices().empty()) {
        throw std::invalid_argument("evaluate_metrics: empty forget set");
    }
    for (const std::size_t idx : dataset.forget_indices()) {
        const QaEntry& entry = dataset.entries()[idx];
        const TokenSequence& output = greedy_answer(model, entry.id);
        forget_sum += rouge_l_recall(output, entry.answer);
        if (entry.paraphrase_reference) {
            paraphrase_sum += rouge_l_recall(output, *entry.paraphrase_reference);
            ++paraphrase_count;
        }
    }
    if (paraphrase_count == 0) {
        throw std::invalid_argument("evaluate_metrics: empty paraphrased-forget set");
    }
    if (dataset.retain_indices().empty()) {
        throw std::invalid_argument("evaluate_metrics: empty retain set");
    }
    if (dataset.heldout_indices().empty()) {
        throw std::invalid_argument("evaluate_metrics: empty held-out set");
    }

    auto mean_score = [&](const std::vector<std::size_t>& indices) {
        double sum = 0.0;
        for (const std::size_t idx : indices) {
            const QaEntry& entry = dataset.entries()[idx];
            sum += rouge_l_recall(greedy_answer(model, entry.id), entry.answer);
        }
        return sum / static_cast<double>(indices.size());
    };

    report.score_forget = forget_sum / static_cast<double>(dataset.forget_indices().size());
    report.score_paraphrased = paraphrase_sum / static_cast<double>(paraphrase_count);
    report.score_retain = mean_score(dataset.retain_indices());
    report.score_heldout = mean_score(dataset.heldout_indices());
    report.unlearn_quality = 2.0 - (report.score_forget + report.score_paraphrased);
    report.utility = report.score_retain + report.score_heldout;
    return report;
}

}  // namespace collapse
