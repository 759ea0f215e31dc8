#include "cmfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cmfuse/error.hpp"

namespace cmfuse {

Metrics compute_metrics(const std::vector<int>& predicted, const std::vector<int>& actual,
                        int positive_class) {
    if (predicted.size() != actual.size()) {
        throw invariant_error("compute_metrics: length mismatch (" + std::to_string(predicted.size()) +
                              " vs " + std::to_string(actual.size()) + ")");
    }
    if (predicted.empty()) throw invariant_error("compute_metrics: empty label lists");
    Metrics m;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const bool actual_pos = actual[i] == positive_class;
        const bool pred_pos = predicted[i] == positive_class;
        if (actual_pos && pred_pos) ++m.tp;
        else if (actual_pos && !pred_pos) ++m.fn;
        else if (!actual_pos && !pred_pos) ++m.tn;
        else ++m.fp;
    }
    const long total = m.tp + m.fn + m.tn + m.fp;
    if (total > 0) m.acc = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
    if (m.tp + m.fn > 0) m.sen = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.tn + m.fp > 0) m.spe = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
    return m;
}

std::vector<std::vector<int>> stratified_folds(const std::vector<int>& labels, int k,
                                               std::uint64_t seed) {
    if (k < 2) throw invariant_error("stratified_folds: need at least 2 folds");
    if (static_cast<int>(labels.size()) < k) {
        throw invariant_error("stratified_folds: fewer subjects than folds");
    }
    std::vector<int> distinct(labels);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
    for (std::size_t c = 0; c < distinct.size(); ++c) {
        std::vector<int> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == distinct[c]) members.push_back(static_cast<int>(i));
        }
        Rng rng(mix64(seed, static_cast<std::uint64_t>(distinct[c])));
        rng.shuffle(members);
        // Rotate the dealing start per class so no fold collects every
        // remainder subject.
        const int start = static_cast<int>(c) % k;
        for (std::size_t m = 0; m < members.size(); ++m) {
            folds[static_cast<std::size_t>((start + static_cast<int>(m)) % k)].push_back(members[m]);
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

namespace {

// Classifier head trained on fixed MC feature rows; returns the store
// holding the head parameters.
ParamStore train_head(const std::vector<Tensor>& features, const std::vector<int>& stages,
                      const std::vector<int>& train_idx, const HeadConfig& hcfg,
                      const EvalConfig& ecfg, std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    register_head_params(store, HeadKind::Classifier, hcfg, rng);
    const AdamConfig adam{ecfg.lr, ecfg.weight_decay, 0.9, 0.99, 1e-8};
    const double inv_m = 1.0 / static_cast<double>(train_idx.size());
    for (int epoch = 0; epoch < ecfg.retrain_epochs; ++epoch) {
        for (int idx : train_idx) {
            Tape tape;
            ParamBinding pb(store, tape, true);
            Var logits = head_mlp_graph(pb, HeadKind::Classifier,
                                        tape.constant_ref(&features[static_cast<std::size_t>(idx)]));
            Var loss = softmax_xent(logits, stages[static_cast<std::size_t>(idx)]);
            tape.backward(loss);
            pb.accumulate(inv_m);
        }
        store.adam_step(adam);
    }
    return store;
}

Tensor head_logits(const ParamStore& store, const Tensor& feature) {
    Tape tape;
    ParamBinding pb(store, tape);
    return head_mlp_graph(pb, HeadKind::Classifier, tape.constant_ref(&feature)).value();
}

std::vector<Tensor> mc_features(const std::vector<const Subject*>& subjects,
                                const TrainState& trained) {
    std::vector<Tensor> features;
    features.reserve(subjects.size());
    for (const Subject* s : subjects) {
        const MultimodalConnectivity mc = generator_forward(*s, trained.gen_store, trained.gcfg);
        features.push_back(vec_upper(mc.values, true));
    }
    return features;
}

Metrics fourway_fold_metrics(long correct, long total) {
    Metrics m;
    m.tp = correct;
    m.fn = total - correct;
    if (total > 0) m.acc = static_cast<double>(correct) / static_cast<double>(total);
    return m;
}

}  // namespace

ExperimentResult binary_experiment(const std::vector<Subject>& cohort, const TrainState& trained,
                                   Stage stage_pos, Stage stage_neg, const TrainConfig& tcfg,
                                   const EvalConfig& ecfg) {
    if (stage_pos == stage_neg) throw invariant_error("binary_experiment: stages must differ");
    std::vector<const Subject*> selected;
    for (const auto& s : cohort) {
        if (s.stage == stage_pos || s.stage == stage_neg) selected.push_back(&s);
    }
    std::vector<int> labels;
    for (const Subject* s : selected) labels.push_back(static_cast<int>(s->stage));
    const int pos = static_cast<int>(stage_pos);
    const int neg = static_cast<int>(stage_neg);
    if (std::count(labels.begin(), labels.end(), pos) == 0 ||
        std::count(labels.begin(), labels.end(), neg) == 0) {
        throw invariant_error("binary_experiment: a stage has no subjects (" +
                              stage_name(stage_pos) + " vs " + stage_name(stage_neg) + ")");
    }

    ExperimentResult result;
    result.name = stage_name(stage_pos) + "-vs-" + stage_name(stage_neg);
    const auto folds = stratified_folds(labels, ecfg.folds, ecfg.seed);

    std::vector<Tensor> features;
    if (ecfg.mode == EvalMode::RetrainHead) features = mc_features(selected, trained);

    double acc_sum = 0.0;
    int acc_count = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<int> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_idx.begin(), train_idx.end());

        std::vector<int> predicted, actual;
        if (ecfg.mode == EvalMode::RetrainHead) {
            ParamStore head = train_head(features, labels, train_idx, trained.hcfg, ecfg,
                                         mix64(ecfg.seed, f + 1));
            for (int idx : folds[f]) {
                const Tensor logits = head_logits(head, features[static_cast<std::size_t>(idx)]);
                predicted.push_back(logits[static_cast<std::size_t>(pos)] >
                                            logits[static_cast<std::size_t>(neg)]
                                        ? pos
                                        : neg);
                actual.push_back(labels[static_cast<std::size_t>(idx)]);
            }
        } else {
            TrainState tuned = trained;
            std::vector<Subject> sub;
            for (int idx : train_idx) sub.push_back(*selected[static_cast<std::size_t>(idx)]);
            TrainConfig ft = tcfg;
            ft.epochs = tuned.epoch + ecfg.finetune_epochs;
            ft.checkpoint_path.clear();
            ft.metrics_path.clear();
            train_loop(tuned, sub, ft);
            for (int idx : folds[f]) {
                const MultimodalConnectivity mc =
                    generator_forward(*selected[static_cast<std::size_t>(idx)], tuned.gen_store,
                                      tuned.gcfg);
                const std::vector<double> probs = classify(mc, tuned.gen_store);
                predicted.push_back(probs[static_cast<std::size_t>(pos)] >
                                            probs[static_cast<std::size_t>(neg)]
                                        ? pos
                                        : neg);
                actual.push_back(labels[static_cast<std::size_t>(idx)]);
            }
        }

        FoldOutcome fo;
        fo.fold = static_cast<int>(f);
        fo.metrics = compute_metrics(predicted, actual, pos);
        fo.total = static_cast<long>(predicted.size());
        fo.correct = fo.metrics.tp + fo.metrics.tn;
        fo.accuracy = fo.metrics.acc.value_or(0.0);
        result.pooled.tp += fo.metrics.tp;
        result.pooled.fn += fo.metrics.fn;
        result.pooled.tn += fo.metrics.tn;
        result.pooled.fp += fo.metrics.fp;
        if (fo.metrics.acc) {
            acc_sum += *fo.metrics.acc;
            ++acc_count;
        }
        result.folds.push_back(std::move(fo));
    }
    const long ptotal = result.pooled.tp + result.pooled.fn + result.pooled.tn + result.pooled.fp;
    if (ptotal > 0) {
        result.pooled.acc = static_cast<double>(result.pooled.tp + result.pooled.tn) / ptotal;
    }
    if (result.pooled.tp + result.pooled.fn > 0) {
        result.pooled.sen = static_cast<double>(result.pooled.tp) / (result.pooled.tp + result.pooled.fn);
    }
    if (result.pooled.tn + result.pooled.fp > 0) {
        result.pooled.spe = static_cast<double>(result.pooled.tn) / (result.pooled.tn + result.pooled.fp);
    }
    result.mean_accuracy = acc_count > 0 ? acc_sum / acc_count : 0.0;
    return result;
}

ExperimentResult fourway_experiment(const std::vector<Subject>& cohort, const TrainState& trained,
                                    const TrainConfig& tcfg, const EvalConfig& ecfg) {
    std::vector<const Subject*> selected;
    for (const auto& s : cohort) selected.push_back(&s);
    if (selected.empty()) throw invariant_error("fourway_experiment: empty cohort");
    std::vector<int> labels;
    for (const Subject* s : selected) labels.push_back(static_cast<int>(s->stage));

    ExperimentResult result;
    result.name = "fourway";
    const auto folds = stratified_folds(labels, ecfg.folds, ecfg.seed);

    std::vector<Tensor> features;
    if (ecfg.mode == EvalMode::RetrainHead) features = mc_features(selected, trained);

    double acc_sum = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<int> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_idx.begin(), train_idx.end());

        long correct = 0;
        if (ecfg.mode == EvalMode::RetrainHead) {
            ParamStore head = train_head(features, labels, train_idx, trained.hcfg, ecfg,
                                         mix64(ecfg.seed, f + 1));
            for (int idx : folds[f]) {
                const Tensor logits = head_logits(head, features[static_cast<std::size_t>(idx)]);
                int best = 0;
                for (int j = 1; j < logits.cols(); ++j) {
                    if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(best)]) best = j;
                }
                if (best == labels[static_cast<std::size_t>(idx)]) ++correct;
            }
        } else {
            TrainState tuned = trained;
            std::vector<Subject> sub;
            for (int idx : train_idx) sub.push_back(*selected[static_cast<std::size_t>(idx)]);
            TrainConfig ft = tcfg;
            ft.epochs = tuned.epoch + ecfg.finetune_epochs;
            ft.checkpoint_path.clear();
            ft.metrics_path.clear();
            train_loop(tuned, sub, ft);
            for (int idx : folds[f]) {
                const MultimodalConnectivity mc =
                    generator_forward(*selected[static_cast<std::size_t>(idx)], tuned.gen_store,
                                      tuned.gcfg);
                const std::vector<double> probs = classify(mc, tuned.gen_store);
                int best = 0;
                for (int j = 1; j < kStageCount; ++j) {
                    if (probs[static_cast<std::size_t>(j)] > probs[static_cast<std::size_t>(best)]) best = j;
                }
                if (best == labels[static_cast<std::size_t>(idx)]) ++correct;
            }
        }

        FoldOutcome fo;
        fo.fold = static_cast<int>(f);
        fo.total = static_cast<long>(folds[f].size());
        fo.correct = correct;
        fo.accuracy = fo.total > 0 ? static_cast<double>(correct) / fo.total : 0.0;
        fo.metrics = fourway_fold_metrics(correct, fo.total);
        result.pooled.tp += fo.metrics.tp;
        result.pooled.fn += fo.metrics.fn;
        acc_sum += fo.accuracy;
        result.folds.push_back(std::move(fo));
    }
    const long ptotal = result.pooled.tp + result.pooled.fn;
    if (ptotal > 0) result.pooled.acc = static_cast<double>(result.pooled.tp) / ptotal;
    result.mean_accuracy = acc_sum / static_cast<double>(folds.size());
    return result;
}

namespace {

std::string ratio_str(const std::optional<double>& r) {
    if (!r) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", *r);
    return buf;
}

}  // namespace

void write_experiment_csv(const std::string& path, const ExperimentResult& result) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << "experiment,fold,tp,fn,tn,fp,acc,sen,spe\n";
    for (const auto& fo : result.folds) {
        out << result.name << ',' << fo.fold << ',' << fo.metrics.tp << ',' << fo.metrics.fn << ','
            << fo.metrics.tn << ',' << fo.metrics.fp << ',' << ratio_str(fo.metrics.acc) << ','
            << ratio_str(fo.metrics.sen) << ',' << ratio_str(fo.metrics.spe) << '\n';
    }
    out << result.name << ",mean," << result.pooled.tp << ',' << result.pooled.fn << ','
        << result.pooled.tn << ',' << result.pooled.fp << ',' << ratio_str(result.pooled.acc) << ','
        << ratio_str(result.pooled.sen) << ',' << ratio_str(result.pooled.spe) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

std::string experiment_summary(const ExperimentResult& result) {
    std::ostringstream os;
    os << "experiment " << result.name << " (" << result.folds.size() << " folds)\n";
    char line[160];
    for (const auto& fo : result.folds) {
        std::snprintf(line, sizeof(line),
                      "  fold %d: acc=%s sen=%s spe=%s (tp=%ld fn=%ld tn=%ld fp=%ld)\n", fo.fold,
                      ratio_str(fo.metrics.acc).c_str(), ratio_str(fo.metrics.sen).c_str(),
                      ratio_str(fo.metrics.spe).c_str(), fo.metrics.tp, fo.metrics.fn,
                      fo.metrics.tn, fo.metrics.fp);
        os << line;
    }
    std::snprintf(line, sizeof(line), "  mean acc=%.4f pooled acc=%s sen=%s spe=%s\n",
                  result.mean_accuracy, ratio_str(result.pooled.acc).c_str(),
                  ratio_str(result.pooled.sen).c_str(), ratio_str(result.pooled.spe).c_str());
    os << line;
    return os.str();
}

}  // namespace cmfuse
