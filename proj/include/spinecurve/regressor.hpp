#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spinecurve/rng.hpp"

namespace spinecurve {

struct LabeledSample {
    double kappa = 1.0;
    double angle_deg = 0.0;
};

/// Paper defaults; the toy problems in the tests override lr and epochs.
struct TrainConfig {
    int batch_size = 128;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double learning_rate = 1e-4;
    double adam_eps = 1e-8;
    int max_epochs = 1000;
    int patience = 20;
    double min_improvement = 1e-4;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Per-sample term: -ln( 1/(2 sigma2) * exp(-|y - mu| / sigma2) ).  The
/// density is parameterized by sigma2 in both the normalizer and the
/// exponent, and is implemented verbatim in that form.
inline double laplace_nll(double mu, double sigma2, double y) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("laplace_nll: sigma2 must be > 0");
    return std::log(2.0 * sigma2) + std::abs(y - mu) / sigma2;
}

namespace detail {

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return z > 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace detail

struct Linear {
    int in = 0, out = 0;
    std::vector<double> weights;  // row-major [out][in]
    std::vector<double> biases;   // [out]
};

struct BatchNorm {
    std::vector<double> scale;  // gamma
    std::vector<double> shift;  // beta
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// 1 -> 16 -> 16 -> 2; each hidden layer is fc, ReLU, then batch norm.  The
/// two outputs are (mu raw, s raw) with sigma2 = softplus(s raw).
struct RegressorModel {
    static constexpr int kHidden = 16;
    static constexpr int kFormatVersion = 1;
    Linear fc1, fc2, head;
    BatchNorm bn1, bn2;
    double input_shift = 1.0;  // the network sees kappa - input_shift
};

namespace detail {

inline Linear make_linear(int in, int out, Rng& rng) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weights.resize(static_cast<std::size_t>(in) * out);
    l.biases.assign(out, 0.0);
    const double sigma = std::sqrt(2.0 / in);  // He initialization
    for (double& w : l.weights) w = sigma * rng.gauss();
    return l;
}

inline BatchNorm make_batch_norm(int n) {
    BatchNorm bn;
    bn.scale.assign(n, 1.0);
    bn.shift.assign(n, 0.0);
    bn.running_mean.assign(n, 0.0);
    bn.running_var.assign(n, 1.0);
    return bn;
}

}  // namespace detail

inline RegressorModel make_regressor(Rng& rng) {
    RegressorModel m;
    m.fc1 = detail::make_linear(1, RegressorModel::kHidden, rng);
    m.fc2 = detail::make_linear(RegressorModel::kHidden, RegressorModel::kHidden, rng);
    m.head = detail::make_linear(RegressorModel::kHidden, 2, rng);
    m.bn1 = detail::make_batch_norm(RegressorModel::kHidden);
    m.bn2 = detail::make_batch_norm(RegressorModel::kHidden);
    return m;
}

// ---------------------------------------------------------------------------
// Forward

namespace detail {

/// Everything backward needs from a training-mode pass over one batch.
struct BatchCache {
    int batch = 0;
    std::vector<double> x;              // normalized input [B]
    std::vector<double> h1, a1, n1;     // [B*16] pre-relu, post-relu, post-norm
    std::vector<double> h2, a2, n2;
    std::vector<double> mu, sraw, sigma2;  // [B]
    std::array<double, RegressorModel::kHidden> mean1{}, std1{}, mean2{}, std2{};
};

inline void check_finite(const std::vector<double>& v, const char* stage) {
    for (const double x : v)
        if (!std::isfinite(x)) throw std::runtime_error(std::string("regressor forward: non-finite value after ") + stage);
}

inline void fc_forward(const Linear& l, const std::vector<double>& in, int batch, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(batch) * l.out, 0.0);
    for (int s = 0; s < batch; ++s) {
        const double* src = in.data() + static_cast<std::size_t>(s) * l.in;
        double* dst = out.data() + static_cast<std::size_t>(s) * l.out;
        for (int o = 0; o < l.out; ++o) {
            double acc = l.biases[o];
            const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.in;
            for (int i = 0; i < l.in; ++i) acc += w[i] * src[i];
            dst[o] = acc;
        }
    }
}

/// Train mode normalizes with biased batch statistics (and folds them into
/// the running estimates of `fold`, when given); eval mode uses the running
/// estimates.
template <std::size_t N>
inline void bn_forward(const BatchNorm& bn, const std::vector<double>& in, int batch, bool train_mode,
                       BatchNorm* fold, std::vector<double>& out, std::array<double, N>* mean_out,
                       std::array<double, N>* std_out) {
    const int n = static_cast<int>(bn.scale.size());
    out.resize(in.size());
    for (int f = 0; f < n; ++f) {
        double mean, var;
        if (train_mode) {
            double acc = 0.0;
            for (int s = 0; s < batch; ++s) acc += in[static_cast<std::size_t>(s) * n + f];
            mean = acc / batch;
            double sq = 0.0;
            for (int s = 0; s < batch; ++s) {
                const double d = in[static_cast<std::size_t>(s) * n + f] - mean;
                sq += d * d;
            }
            var = sq / batch;
            if (fold) {
                fold->running_mean[f] = (1.0 - bn.momentum) * bn.running_mean[f] + bn.momentum * mean;
                fold->running_var[f] = (1.0 - bn.momentum) * bn.running_var[f] + bn.momentum * var;
            }
        } else {
            mean = bn.running_mean[f];
            var = bn.running_var[f];
        }
        const double inv = 1.0 / std::sqrt(var + bn.eps);
        if (mean_out) (*mean_out)[static_cast<std::size_t>(f)] = mean;
        if (std_out) (*std_out)[static_cast<std::size_t>(f)] = std::sqrt(var + bn.eps);
        for (int s = 0; s < batch; ++s) {
            const std::size_t k = static_cast<std::size_t>(s) * n + f;
            out[k] = bn.scale[f] * ((in[k] - mean) * inv) + bn.shift[f];
        }
    }
}

/// `fold_into` receives updated running statistics on a train-mode pass; pass
/// &model for optimizer steps, nullptr everywhere else.
inline void batch_forward(const RegressorModel& model, const std::vector<double>& kappas, bool train_mode,
                          RegressorModel* fold_into, BatchCache& c) {
    const int batch = static_cast<int>(kappas.size());
    c.batch = batch;
    c.x.resize(kappas.size());
    for (int s = 0; s < batch; ++s) c.x[static_cast<std::size_t>(s)] = kappas[static_cast<std::size_t>(s)] - model.input_shift;

    fc_forward(model.fc1, c.x, batch, c.h1);
    check_finite(c.h1, "layer 1 (fc)");
    c.a1.resize(c.h1.size());
    for (std::size_t i = 0; i < c.h1.size(); ++i) c.a1[i] = std::max(c.h1[i], 0.0);
    bn_forward(model.bn1, c.a1, batch, train_mode, fold_into ? &fold_into->bn1 : nullptr, c.n1, &c.mean1, &c.std1);
    check_finite(c.n1, "layer 1 (norm)");

    fc_forward(model.fc2, c.n1, batch, c.h2);
    check_finite(c.h2, "layer 2 (fc)");
    c.a2.resize(c.h2.size());
    for (std::size_t i = 0; i < c.h2.size(); ++i) c.a2[i] = std::max(c.h2[i], 0.0);
    bn_forward(model.bn2, c.a2, batch, train_mode, fold_into ? &fold_into->bn2 : nullptr, c.n2, &c.mean2, &c.std2);
    check_finite(c.n2, "layer 2 (norm)");

    std::vector<double> out;
    fc_forward(model.head, c.n2, batch, out);
    check_finite(out, "output head");
    c.mu.resize(kappas.size());
    c.sraw.resize(kappas.size());
    c.sigma2.resize(kappas.size());
    for (int s = 0; s < batch; ++s) {
        c.mu[static_cast<std::size_t>(s)] = out[static_cast<std::size_t>(s) * 2];
        c.sraw[static_cast<std::size_t>(s)] = out[static_cast<std::size_t>(s) * 2 + 1];
        c.sigma2[static_cast<std::size_t>(s)] = softplus(c.sraw[static_cast<std::size_t>(s)]);
    }
}

}  // namespace detail

enum class ForwardMode { train, eval };

/// Single-sample forward.  Eval mode is deterministic and side-effect free;
/// train mode normalizes against the one-sample batch and leaves the running
/// statistics untouched.
inline std::pair<double, double> forward(const RegressorModel& model, double kappa,
                                         ForwardMode mode = ForwardMode::eval) {
    detail::BatchCache cache;
    detail::batch_forward(model, {kappa}, mode == ForwardMode::train, nullptr, cache);
    return {cache.mu[0], cache.sigma2[0]};
}

// ---------------------------------------------------------------------------
// Backward

/// Flat parameter order: fc1.w, fc1.b, bn1.scale, bn1.shift, fc2.w, fc2.b,
/// bn2.scale, bn2.shift, head.w, head.b.  Running statistics are state, not
/// parameters, and are excluded.
inline std::vector<double> flatten_params(const RegressorModel& m) {
    std::vector<double> out;
    for (const auto* v : {&m.fc1.weights, &m.fc1.biases, &m.bn1.scale, &m.bn1.shift, &m.fc2.weights, &m.fc2.biases,
                          &m.bn2.scale, &m.bn2.shift, &m.head.weights, &m.head.biases})
        out.insert(out.end(), v->begin(), v->end());
    return out;
}

inline void load_params(RegressorModel& m, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (auto* v : {&m.fc1.weights, &m.fc1.biases, &m.bn1.scale, &m.bn1.shift, &m.fc2.weights, &m.fc2.biases,
                    &m.bn2.scale, &m.bn2.shift, &m.head.weights, &m.head.biases}) {
        if (pos + v->size() > flat.size()) throw std::invalid_argument("load_params: parameter vector too short");
        std::copy(flat.begin() + pos, flat.begin() + pos + v->size(), v->begin());
        pos += v->size();
    }
    if (pos != flat.size()) throw std::invalid_argument("load_params: parameter vector too long");
}

namespace detail {

struct LayerGrads {
    std::vector<double> fc1_w, fc1_b, bn1_scale, bn1_shift;
    std::vector<double> fc2_w, fc2_b, bn2_scale, bn2_shift;
    std::vector<double> head_w, head_b;

    std::vector<double> flatten() const {
        std::vector<double> out;
        for (const auto* v : {&fc1_w, &fc1_b, &bn1_scale, &bn1_shift, &fc2_w, &fc2_b, &bn2_scale, &bn2_shift,
                              &head_w, &head_b})
            out.insert(out.end(), v->begin(), v->end());
        return out;
    }
};

inline void fc_backward(const Linear& l, const std::vector<double>& in, const std::vector<double>& dout, int batch,
                        std::vector<double>& dw, std::vector<double>& db, std::vector<double>* din) {
    dw.assign(l.weights.size(), 0.0);
    db.assign(l.biases.size(), 0.0);
    if (din) din->assign(in.size(), 0.0);
    for (int s = 0; s < batch; ++s) {
        const double* src = in.data() + static_cast<std::size_t>(s) * l.in;
        const double* g = dout.data() + static_cast<std::size_t>(s) * l.out;
        for (int o = 0; o < l.out; ++o) {
            const double go = g[o];
            db[o] += go;
            double* dwrow = dw.data() + static_cast<std::size_t>(o) * l.in;
            const double* wrow = l.weights.data() + static_cast<std::size_t>(o) * l.in;
            for (int i = 0; i < l.in; ++i) {
                dwrow[i] += go * src[i];
                if (din) (*din)[static_cast<std::size_t>(s) * l.in + i] += go * wrow[i];
            }
        }
    }
}

/// Gradient through train-mode batch normalization with biased variance.
template <std::size_t N>
inline void bn_backward(const BatchNorm& bn, const std::vector<double>& in, const std::vector<double>& dout,
                        int batch, const std::array<double, N>& mean, const std::array<double, N>& stdev,
                        std::vector<double>& dscale, std::vector<double>& dshift, std::vector<double>& din) {
    const int n = static_cast<int>(bn.scale.size());
    dscale.assign(bn.scale.size(), 0.0);
    dshift.assign(bn.shift.size(), 0.0);
    din.assign(in.size(), 0.0);
    for (int f = 0; f < n; ++f) {
        const double inv = 1.0 / stdev[static_cast<std::size_t>(f)];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int s = 0; s < batch; ++s) {
            const std::size_t k = static_cast<std::size_t>(s) * n + f;
            const double xhat = (in[k] - mean[static_cast<std::size_t>(f)]) * inv;
            sum_g += dout[k];
            sum_gx += dout[k] * xhat;
        }
        dshift[f] = sum_g;
        dscale[f] = sum_gx;
        const double c = bn.scale[f] * inv;
        for (int s = 0; s < batch; ++s) {
            const std::size_t k = static_cast<std::size_t>(s) * n + f;
            const double xhat = (in[k] - mean[static_cast<std::size_t>(f)]) * inv;
            din[k] = c * (dout[k] - sum_g / batch - xhat * sum_gx / batch);
        }
    }
}

}  // namespace detail

/// Mean Laplace NLL over the batch and its exact gradient for every
/// parameter.  Forward runs in train mode; the running statistics are folded
/// in only when update_running is set (one fold per optimizer step).
inline std::pair<double, std::vector<double>> backward(RegressorModel& model, const std::vector<LabeledSample>& batch,
                                                       bool update_running = true) {
    if (batch.empty()) throw std::invalid_argument("backward: batch must be non-empty");
    const int n = static_cast<int>(batch.size());
    std::vector<double> kappas(batch.size());
    for (int s = 0; s < n; ++s) kappas[static_cast<std::size_t>(s)] = batch[static_cast<std::size_t>(s)].kappa;

    detail::BatchCache c;
    detail::batch_forward(model, kappas, true, update_running ? &model : nullptr, c);

    double loss = 0.0;
    std::vector<double> dout(static_cast<std::size_t>(n) * 2);
    for (int s = 0; s < n; ++s) {
        const double y = batch[static_cast<std::size_t>(s)].angle_deg;
        const double mu = c.mu[static_cast<std::size_t>(s)];
        const double s2 = c.sigma2[static_cast<std::size_t>(s)];
        const double r = y - mu;
        loss += laplace_nll(mu, s2, y);
        // d/dmu = -sign(r)/s2 with sign(0) = 0; d/dsigma2 = 1/s2 - |r|/s2^2.
        const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        dout[static_cast<std::size_t>(s) * 2] = -sign / s2 / n;
        dout[static_cast<std::size_t>(s) * 2 + 1] =
            (1.0 / s2 - std::abs(r) / (s2 * s2)) * detail::sigmoid(c.sraw[static_cast<std::size_t>(s)]) / n;
    }
    loss /= n;

    detail::LayerGrads g;
    std::vector<double> dn2, da2, dh2, dn1, da1, dh1;
    detail::fc_backward(model.head, c.n2, dout, n, g.head_w, g.head_b, &dn2);
    detail::bn_backward(model.bn2, c.a2, dn2, n, c.mean2, c.std2, g.bn2_scale, g.bn2_shift, da2);
    dh2 = da2;
    for (std::size_t i = 0; i < dh2.size(); ++i)
        if (c.h2[i] <= 0.0) dh2[i] = 0.0;
    detail::fc_backward(model.fc2, c.n1, dh2, n, g.fc2_w, g.fc2_b, &dn1);
    detail::bn_backward(model.bn1, c.a1, dn1, n, c.mean1, c.std1, g.bn1_scale, g.bn1_shift, da1);
    dh1 = da1;
    for (std::size_t i = 0; i < dh1.size(); ++i)
        if (c.h1[i] <= 0.0) dh1[i] = 0.0;
    detail::fc_backward(model.fc1, c.x, dh1, n, g.fc1_w, g.fc1_b, nullptr);

    return {loss, g.flatten()};
}

/// Mean training-mode loss without gradient bookkeeping or running-stat
/// updates; the quantity backward() differentiates.
inline double batch_loss(const RegressorModel& model, const std::vector<LabeledSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: batch must be non-empty");
    std::vector<double> kappas(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) kappas[s] = batch[s].kappa;
    detail::BatchCache c;
    detail::batch_forward(model, kappas, true, nullptr, c);
    double loss = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) loss += laplace_nll(c.mu[s], c.sigma2[s], batch[s].angle_deg);
    return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Training

/// Decay the learning rate when validation stops improving by at least
/// min_improvement for `patience` consecutive epochs; the third exhausted
/// window (after two decays) stops training.
struct PlateauSchedule {
    int patience = 20;
    double min_improvement = 1e-4;
    int max_decays = 2;

    enum class Action { none, decay, stop };

    double best = std::numeric_limits<double>::infinity();
    int stall = 0;
    int decays = 0;

    Action observe(double val_loss) {
        if (val_loss < best - min_improvement) {
            best = val_loss;
            stall = 0;
            return Action::none;
        }
        if (++stall < patience) return Action::none;
        stall = 0;
        if (decays < max_decays) {
            ++decays;
            return Action::decay;
        }
        return Action::stop;
    }
};

struct TrainLogEntry {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
    std::string event;  // "", "lr_decay", "early_stop"
};

struct TrainResult {
    RegressorModel model;  // best-validation snapshot
    std::vector<TrainLogEntry> log;
    double best_val_loss = 0.0;
    int epochs_run = 0;
    bool early_stopped = false;
};

inline double validation_loss(const RegressorModel& model, const std::vector<LabeledSample>& samples) {
    double loss = 0.0;
    for (const auto& s : samples) {
        const auto [mu, s2] = forward(model, s.kappa, ForwardMode::eval);
        loss += laplace_nll(mu, s2, s.angle_deg);
    }
    return loss / static_cast<double>(samples.size());
}

namespace detail {

inline void validate_train_config(const TrainConfig& config) {
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (config.beta1 <= 0.0 || config.beta1 >= 1.0 || config.beta2 <= 0.0 || config.beta2 >= 1.0)
        throw std::invalid_argument("train: betas must lie in (0, 1)");
    if (config.batch_size < 1 || config.max_epochs < 1 || config.patience < 1)
        throw std::invalid_argument("train: batch_size, max_epochs, and patience must be >= 1");
}

inline TrainResult train_loop(const std::vector<LabeledSample>& train_set, const std::vector<LabeledSample>& val_set,
                              const TrainConfig& config, Rng& rng) {
    RegressorModel model = make_regressor(rng);
    const std::size_t n_params = flatten_params(model).size();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    long long t = 0;
    double lr = config.learning_rate;

    TrainResult result;
    result.model = model;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    PlateauSchedule schedule{config.patience, config.min_improvement};

    std::vector<std::size_t> idx(train_set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(idx);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<LabeledSample> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[idx[i]]);

            double loss;
            std::vector<double> grads;
            try {
                std::tie(loss, grads) = backward(model, batch, true);
            } catch (const std::exception& e) {
                // Numeric failures mid-step are divergence, not caller errors.
                throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) + " (" + e.what() + ")");
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
            epoch_loss += loss * static_cast<double>(batch.size());

            ++t;
            auto params = flatten_params(model);
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
            for (std::size_t i = 0; i < n_params; ++i) {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grads[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
                params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
            }
            load_params(model, params);
        }
        epoch_loss /= static_cast<double>(train_set.size());

        double val_loss;
        try {
            val_loss = validation_loss(model, val_set);
        } catch (const std::exception& e) {
            throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) + " (" + e.what() + ")");
        }
        if (!std::isfinite(val_loss))
            throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");

        TrainLogEntry entry{epoch, epoch_loss, val_loss, lr, ""};
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.model = model;
        }
        switch (schedule.observe(val_loss)) {
            case PlateauSchedule::Action::decay:
                lr *= 0.1;
                entry.event = "lr_decay";
                break;
            case PlateauSchedule::Action::stop:
                entry.event = "early_stop";
                result.early_stopped = true;
                break;
            case PlateauSchedule::Action::none:
                break;
        }
        result.log.push_back(std::move(entry));
        result.epochs_run = epoch;
        if (result.early_stopped) break;
    }
    return result;
}

}  // namespace detail

/// Explicit train/validation sets (for pre-split corpora).
inline TrainResult train(const std::vector<LabeledSample>& train_set, const std::vector<LabeledSample>& val_set,
                         const TrainConfig& config) {
    detail::validate_train_config(config);
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: training and validation sets must be non-empty");
    Rng rng(config.seed);
    return detail::train_loop(train_set, val_set, config, rng);
}

/// Deterministic split: shuffle once, the last val_fraction chunk becomes
/// validation.
inline TrainResult train(const std::vector<LabeledSample>& data, const TrainConfig& config) {
    detail::validate_train_config(config);
    if (data.size() < 2) throw std::invalid_argument("train: need at least 2 samples");
    if (!(config.val_fraction > 0.0) || !(config.val_fraction < 1.0))
        throw std::invalid_argument("train: val_fraction must lie in (0, 1)");

    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(data.size()))), 1,
        data.size() - 1);
    std::vector<LabeledSample> train_set, val_set;
    for (std::size_t i = 0; i < order.size() - n_val; ++i) train_set.push_back(data[order[i]]);
    for (std::size_t i = order.size() - n_val; i < order.size(); ++i) val_set.push_back(data[order[i]]);
    return detail::train_loop(train_set, val_set, config, rng);
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
    double angle_deg = 0.0;
    double sigma2 = 0.0;
};

inline Prediction predict_angle(const RegressorModel& model, double kappa) {
    if (!(kappa >= 1.0)) throw std::invalid_argument("predict_angle: kappa must be >= 1");
    const auto [mu, sigma2] = forward(model, kappa, ForwardMode::eval);
    return {std::max(mu, 0.0), sigma2};
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json linear_to_json(const Linear& l) {
    return {{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"biases", l.biases}};
}

inline Linear linear_from_json(const nlohmann::json& j) {
    Linear l;
    l.in = j.at("in").get<int>();
    l.out = j.at("out").get<int>();
    l.weights = j.at("weights").get<std::vector<double>>();
    l.biases = j.at("biases").get<std::vector<double>>();
    if (l.in < 1 || l.out < 1 || l.weights.size() != static_cast<std::size_t>(l.in) * l.out ||
        l.biases.size() != static_cast<std::size_t>(l.out))
        throw std::runtime_error("regressor model: inconsistent layer shape");
    return l;
}

inline nlohmann::json bn_to_json(const BatchNorm& bn) {
    return {{"scale", bn.scale},
            {"shift", bn.shift},
            {"running_mean", bn.running_mean},
            {"running_var", bn.running_var},
            {"momentum", bn.momentum},
            {"eps", bn.eps}};
}

inline BatchNorm bn_from_json(const nlohmann::json& j, std::size_t n) {
    BatchNorm bn;
    bn.scale = j.at("scale").get<std::vector<double>>();
    bn.shift = j.at("shift").get<std::vector<double>>();
    bn.running_mean = j.at("running_mean").get<std::vector<double>>();
    bn.running_var = j.at("running_var").get<std::vector<double>>();
    bn.momentum = j.at("momentum").get<double>();
    bn.eps = j.at("eps").get<double>();
    if (bn.scale.size() != n || bn.shift.size() != n || bn.running_mean.size() != n || bn.running_var.size() != n)
        throw std::runtime_error("regressor model: inconsistent batch-norm shape");
    return bn;
}

}  // namespace detail

inline nlohmann::json model_to_json(const RegressorModel& m) {
    return {{"format_version", RegressorModel::kFormatVersion},
            {"input_shift", m.input_shift},
            {"fc1", detail::linear_to_json(m.fc1)},
            {"bn1", detail::bn_to_json(m.bn1)},
            {"fc2", detail::linear_to_json(m.fc2)},
            {"bn2", detail::bn_to_json(m.bn2)},
            {"head", detail::linear_to_json(m.head)}};
}

inline RegressorModel model_from_json(const nlohmann::json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != RegressorModel::kFormatVersion)
        throw std::runtime_error("regressor model: unsupported format_version " + std::to_string(version));
    RegressorModel m;
    m.input_shift = j.at("input_shift").get<double>();
    m.fc1 = detail::linear_from_json(j.at("fc1"));
    m.fc2 = detail::linear_from_json(j.at("fc2"));
    m.head = detail::linear_from_json(j.at("head"));
    if (m.fc1.in != 1 || m.fc1.out != RegressorModel::kHidden || m.fc2.in != RegressorModel::kHidden ||
        m.fc2.out != RegressorModel::kHidden || m.head.in != RegressorModel::kHidden || m.head.out != 2)
        throw std::runtime_error("regressor model: unexpected layer dimensions");
    m.bn1 = detail::bn_from_json(j.at("bn1"), RegressorModel::kHidden);
    m.bn2 = detail::bn_from_json(j.at("bn2"), RegressorModel::kHidden);
    return m;
}

inline void save_model(const std::string& path, const RegressorModel& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open file for writing");
    out << model_to_json(m).dump(2) << '\n';
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline RegressorModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": invalid model JSON: " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": invalid model JSON: " + e.what());
    }
}

/// CSV `kappa,angle_deg` with an optional header line.  Row numbers in
/// errors are 1-based over the physical file.
inline std::vector<LabeledSample> load_training_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open file");
    std::vector<LabeledSample> out;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": expected kappa,angle_deg");
        double kappa, angle;
        try {
            std::size_t used = 0;
            kappa = std::stod(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("trailing characters");
            const std::string rest = line.substr(comma + 1);
            angle = std::stod(rest, &used);
            if (used != rest.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            if (row == 1 && out.empty()) continue;  // header line
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": expected kappa,angle_deg");
        }
        if (!std::isfinite(kappa) || !std::isfinite(angle))
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": non-finite value");
        if (kappa < 1.0)
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": kappa must be >= 1");
        out.push_back({kappa, angle});
    }
    return out;
}

inline void save_training_csv(const std::string& path, const std::vector<LabeledSample>& samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open file for writing");
    out << "kappa,angle_deg\n";
    char buf[80];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.kappa, s.angle_deg);
        out << buf;
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace spinecurve
