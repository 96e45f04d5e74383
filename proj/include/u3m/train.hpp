#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "u3m/augment.hpp"
#include "u3m/checkpoint.hpp"
#include "u3m/dataset.hpp"
#include "u3m/loss.hpp"
#include "u3m/metrics.hpp"
#include "u3m/model.hpp"
#include "u3m/optim.hpp"

namespace u3m {

struct EpochLog {
    size_t epoch;
    double loss;
    double miou;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double best_miou = 0.0;
    size_t best_epoch = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    size_t steps = 0;
};

/// Forward a batch of samples through the model (no augmentation, no tape)
/// and update the confusion matrix with its predictions.
inline void evaluate_into(const Model& model, const std::vector<ModalitySample>& data, ConfusionMatrix& cm,
                          int ignore_index) {
    for (const ModalitySample& s : data) {
        std::vector<Tensor> images;
        for (size_t m = 0; m < model.config().modalities; ++m) {
            const Tensor& img = s.images.at(m);
            images.push_back(img.with_shape({1, img.extent(0), img.extent(1), img.extent(2)}));
        }
        Tensor logits = model.forward(images, nullptr);
        std::vector<SegMap> pred = predict_labels(logits);
        cm.update(pred[0], s.label, ignore_index);
    }
}

inline ConfusionMatrix evaluate(const Model& model, const std::vector<ModalitySample>& data, int ignore_index) {
    ConfusionMatrix cm(model.config().head.num_classes);
    evaluate_into(model, data, cm, ignore_index);
    return cm;
}

/// Deterministic (given seed, single thread) training loop: seeded shuffle,
/// per-sample augmentation draw, cross-entropy + Adam. Writes `epoch,loss,miou`
/// CSV rows to `csv` when given; checkpoints the best-mIoU epoch
/// (<out>.best) and the final state (<out>) when `ckpt_out` is non-empty.
/// Aborts with a diagnostic naming the step if the loss turns non-finite.
inline TrainResult train(Model& model, const std::vector<ModalitySample>& data, const TrainConfig& cfg,
                         const std::string& ckpt_out = {}, std::ostream* csv = nullptr) {
    cfg.validate();
    if (data.empty()) throw data_error("training data is empty");
    for (const ModalitySample& s : data)
        if (s.images.size() < model.config().modalities)
            throw data_error("sample " + s.id + " provides " + std::to_string(s.images.size()) +
                             " modalities, model needs " + std::to_string(model.config().modalities));
    model.config().validate_input(data[0].label.rows, data[0].label.cols);

    Rng rng(cfg.seed);
    AdamState state(model.params());
    TrainResult result;
    if (csv) *csv << "epoch,loss,miou\n";

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // seeded Fisher-Yates shuffle
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(rng.below(i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        size_t batches = 0;
        double lr = scheduled_lr(cfg, epoch);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<ModalitySample> batch;
            std::vector<SegMap> labels;
            for (size_t i = start; i < end; ++i) {
                ModalitySample s = data[order[i]];
                if (cfg.aug_hflip || cfg.aug_rotate || cfg.aug_scale)
                    s = augment(s, rng, cfg.aug_hflip, cfg.aug_rotate, cfg.aug_scale, cfg.ignore_index);
                labels.push_back(s.label);
                batch.push_back(std::move(s));
            }
            std::vector<Tensor> images;
            for (size_t m = 0; m < model.config().modalities; ++m) images.push_back(stack_modality(batch, m));

            Tape tape;
            Tensor logits = model.forward(images, &tape);
            Tensor loss = cross_entropy_loss(logits, labels, cfg.ignore_index);
            double lv = loss.value();
            if (!std::isfinite(lv))
                throw numeric_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(result.steps + 1));
            Gradients grads = tape.backward(loss);
            adam_step(model.params(), grads, state, cfg, lr);

            if (result.steps == 0) result.initial_loss = lv;
            result.final_loss = lv;
            epoch_loss += lv;
            ++result.steps;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);

        ConfusionMatrix cm = evaluate(model, data, cfg.ignore_index);
        double miou = cm.miou();
        result.log.push_back(EpochLog{epoch, epoch_loss, miou});
        if (csv) *csv << epoch << "," << epoch_loss << "," << miou << "\n";

        if (result.best_epoch == 0 || miou > result.best_miou) {
            result.best_miou = miou;
            result.best_epoch = epoch;
            if (!ckpt_out.empty()) save_checkpoint(ckpt_out + ".best", model);
        }
    }

    if (!ckpt_out.empty()) save_checkpoint(ckpt_out, model);
    return result;
}

}  // namespace u3m
