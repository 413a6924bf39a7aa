#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bknet/data.hpp"
#include "bknet/network.hpp"

namespace bknet {

enum class ParamGroup { Basis, Coefficients };
enum class ActiveSet { Basis, Coefficients, Both };

const char* param_group_name(ParamGroup g);

enum class LrSchedule { Step5075, Cosine };

struct TrainConfig {
    float gamma = 1e-4f;  // l1 strength on coefficients
    float base_lr = 0.01f;
    LrSchedule schedule = LrSchedule::Step5075;
    float momentum = 0.9f;
    float weight_decay = 1e-4f;
    int batch_size = 128;
    int epochs = 0;
    int alternation_interval = 5;
    std::uint64_t seed = 0;
    ParamGroup start_group = ParamGroup::Basis;
    bool augment = false;

    void check() const;
};

struct LossBreakdown {
    double data_loss = 0;
    double l1_term = 0;
    double total = 0;
};

struct EpochLog {
    int epoch = 0;
    std::string active_group;
    double data_loss = 0;
    double l1_term = 0;
    double train_acc = 0;
    double test_acc = 0;
    double coeff_sparsity = 0;  // fraction of coefficients with |a| < 1e-3
};

std::string epoch_log_csv(const std::vector<EpochLog>& logs);

// Learning rate at a given epoch under the configured schedule.
float lr_at_epoch(const TrainConfig& cfg, int epoch);

// Stabilized softmax cross-entropy, mean over the batch.
struct XentResult {
    double loss = 0;
    Tensor grad;  // d(mean loss)/d logits
    int correct = 0;
};
XentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels,
                        std::size_t label_offset);

template <class T>
struct DecompGradsT {
    TensorT<T> grad_basis;
    TensorT<T> grad_coeff;
};

// Basis/coefficient gradients from the reconstructed-weight gradient:
// grad_basis = coeff^T * grad_theta', grad_coeff = grad_theta' * basis^T
// plus gamma * sign(coeff) with sign(0) = 0. The frozen group's gradient
// is zeroed, as are masked coefficient slots and (when centered) the
// frozen mean row and its pinned coefficients.
template <class T>
DecompGradsT<T> decomposed_weight_grads(const TensorT<T>& grad_theta, const TensorT<T>& basis,
                                        const TensorT<T>& coeff,
                                        const std::vector<std::uint8_t>* mask, T gamma,
                                        ActiveSet active, bool centered);

DecompGradsT<float> decomposed_backward(const DecomposedConvLayer& layer, const Tensor& grad_theta,
                                        float gamma, ActiveSet active);

// Parameter-congruent gradient buffers for a full backward pass.
struct LayerGrads {
    Tensor weight;
    Tensor basis;
    Tensor coeff;
    std::vector<float> bias;
    std::vector<float> gamma;
    std::vector<float> beta;
};

struct NetGrads {
    std::vector<LayerGrads> layers;
    std::vector<LayerGrads> skip_proj;
};

NetGrads make_grad_buffers(const Network& net);

// Full manual backward pass; requires a cache from forward_train. Returns
// the l1 term of the loss (gamma * sum |coeff|) as a convenience.
double backward(Network& net, const ForwardCache& cache, const Tensor& grad_logits, float gamma,
                ActiveSet active, NetGrads& grads);

// SGD-with-momentum state over every trainable tensor of the network.
class Sgd {
public:
    Sgd(Network& net, const TrainConfig& cfg);

    // Applies one update using `grads`. Frozen parameters are skipped
    // entirely; masked coefficients are pinned at zero.
    void step(const NetGrads& grads, float lr, ActiveSet active);

    // Clears the velocity of the exclusive group that just became active.
    void reset_group_velocity(ParamGroup group);

private:
    struct Slot {
        float* value;
        std::size_t size;
        enum class Cls { Basis, Coeff, Dense, Bias, BnScale, BnShift } cls;
        const std::uint8_t* mask;
        const float* grad;  // bound per step
        std::vector<float> velocity;
        int tail_guard;  // >0: last `tail_guard` of every `stride` entries frozen (centered)
        int stride;
    };
    std::vector<Slot> slots_;
    float momentum_, weight_decay_;

    void bind_grads(const NetGrads& grads, Network& net);
    friend struct SgdTestPeek;
    Network* net_;
};

struct EpochResult {
    LossBreakdown loss;  // batch-averaged
    double train_acc = 0;
};

// One SGD pass over the data; only the active group (plus always-trained
// dense/bias/BN parameters) moves. Throws on non-finite loss.
EpochResult train_epoch(Network& net, const Dataset& data, const TrainConfig& cfg,
                        ActiveSet active, Sgd& sgd, float lr, Rng& rng);

double evaluate(const Network& net, const Dataset& data, int batch_size = 256);

// Fraction of decomposed coefficients with |a| < 1e-3.
double coefficient_sparsity(const Network& net);

// Alternating basis/coefficient retraining of a decomposed network.
std::vector<EpochLog> retrain(Network& net, const DataSplit& data, const TrainConfig& cfg);

// Joint fine-tune with gamma = 0; prune masks conserved exactly.
std::vector<EpochLog> finetune_masked(Network& net, const DataSplit& data, const TrainConfig& cfg);

// Dense baseline training (no decomposed layers required).
std::vector<EpochLog> pretrain_dense(Network& net, const DataSplit& data, const TrainConfig& cfg);

// Fan-in scaled uniform init (bound sqrt(6/fan_in)) for conv/linear/skip
// weights; zero biases; identity BN.
void init_parameters(Network& net, Rng& rng);

}  // namespace bknet
