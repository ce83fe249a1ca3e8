#include "fusion/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "fusion/metrics.hpp"
#include "fusion/ops.hpp"

namespace fusion {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr double kSsimWeight = 0.2;

Tensor ssim_scalar(const Tensor& a, const Tensor& b) {
    static const std::vector<double> win = gaussian_window(kWindow, 1.5);
    Tensor mu_a = filter2_valid(a, win, kWindow);
    Tensor mu_b = filter2_valid(b, win, kWindow);
    Tensor s_aa = filter2_valid(mul(a, a), win, kWindow);
    Tensor s_bb = filter2_valid(mul(b, b), win, kWindow);
    Tensor s_ab = filter2_valid(mul(a, b), win, kWindow);
    Tensor var_a = sub(s_aa, mul(mu_a, mu_a));
    Tensor var_b = sub(s_bb, mul(mu_b, mu_b));
    Tensor cov = sub(s_ab, mul(mu_a, mu_b));
    Tensor num = mul(add_const(mul_const(mul(mu_a, mu_b), 2.0), kC1),
                     add_const(mul_const(cov, 2.0), kC2));
    Tensor den = mul(add_const(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), kC1),
                     add_const(add(var_a, var_b), kC2));
    return mean(div(num, den));
}

}  // namespace

Tensor training_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("loss: shape mismatch " + shape_str(pred.shape()) +
                         " vs " + shape_str(target.shape()));
    Tensor l1 = mean(abs(sub(pred, target)));
    Tensor dssim = add_const(mul_const(ssim_scalar(pred, target), -1.0), 1.0);
    return add(l1, mul_const(dssim, kSsimWeight));
}

void adam_step(TrainState& state, ParamList& params,
               const TrainConfig& config) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam: state does not match parameters");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].tensor.data();
        auto grad = params[i].tensor.grad();  // empty: never back-propagated
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            double g = grad.empty() ? 0.0 : grad[j];
            if (!std::isfinite(g))
                throw NumericalError("adam: non-finite gradient in " +
                                     params[i].name);
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            double m_hat = m[j] / bc1;
            double v_hat = v[j] / bc2;
            theta[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

namespace {

double validation_l1(const FusionModel& model,
                     const std::vector<TrainPair>& val_set) {
    NoGradGuard guard;
    double acc = 0.0;
    for (const auto& pair : val_set) {
        Tensor pred = model.forward(pair.degraded);
        auto pv = pred.data();
        auto cv = pair.clean.data();
        double l1 = 0.0;
        for (std::size_t i = 0; i < pv.size(); ++i)
            l1 += std::fabs(pv[i] - cv[i]);
        acc += l1 / static_cast<double>(pv.size());
    }
    return acc / static_cast<double>(val_set.size());
}

double validation_psnr(const FusionModel& model,
                       const std::vector<TrainPair>& val_set) {
    NoGradGuard guard;
    double acc = 0.0;
    for (const auto& pair : val_set)
        acc += psnr(model.forward(pair.degraded), pair.clean);
    return acc / static_cast<double>(val_set.size());
}

}  // namespace

std::string TrainResult::history_text() const {
    std::ostringstream os;
    os << "early_stopping_metric=val_l1\n";
    os.precision(12);
    for (const auto& r : history)
        os << "epoch=" << r.epoch << " train_loss=" << r.train_loss
           << " val_l1=" << r.val_l1 << " val_psnr=" << r.val_psnr << '\n';
    return os.str();
}

TrainResult train(FusionModel& model, const std::vector<TrainPair>& train_set,
                  const std::vector<TrainPair>& val_set,
                  const TrainConfig& config) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: dataset must be non-empty");
    if (config.batch_size == 0)
        throw std::invalid_argument("train: batch_size must be positive");

    TrainState state = TrainState::init(model.parameters(), config.seed);
    Rng shuffle_rng(config.seed);
    TrainResult result;
    result.best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[shuffle_rng.next_u64() % i]);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            const std::size_t end =
                std::min(start + config.batch_size, order.size());
            model.zero_grads();
            Tensor batch_loss;
            for (std::size_t k = start; k < end; ++k) {
                const auto& pair = train_set[order[k]];
                Tensor item = training_loss(model.forward(pair.degraded),
                                            pair.clean);
                batch_loss = batch_loss.defined() ? add(batch_loss, item)
                                                  : item;
            }
            batch_loss = mul_const(batch_loss,
                                   1.0 / static_cast<double>(end - start));
            double loss_value = batch_loss.item();
            if (!std::isfinite(loss_value))
                throw NumericalError("train: non-finite loss at step " +
                                     std::to_string(state.step + 1));
            batch_loss.backward();
            adam_step(state, model.parameters(), config);
            epoch_loss += loss_value;
            ++batches;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss / static_cast<double>(batches);
        record.val_l1 = validation_l1(model, val_set);
        record.val_psnr = validation_psnr(model, val_set);
        result.history.push_back(record);
        result.epochs_run = epoch;

        if (record.val_l1 < result.best_val) {
            result.best_val = record.val_l1;
            state.best_val = record.val_l1;
            state.epochs_since_best = 0;
            if (!config.checkpoint_path.empty())
                save_checkpoint(model, state, config.checkpoint_path);
        } else {
            state.epochs_since_best += 1;
            if (state.epochs_since_best >= config.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    return result;
}

}  // namespace fusion
