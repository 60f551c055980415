#pragma once

#include "ste/nn.hpp"
#include "ste/rng.hpp"
#include "ste/spatial.hpp"
#include "ste/tensor.hpp"

#include <string>
#include <vector>

namespace ste {

enum class ModelKind { mven, gcen, sten };

std::string kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

struct NoiseConfig {
    enum class Dist { gaussian, uniform };
    enum class Mode { additive, concat };
    Dist distribution = Dist::gaussian; // uniform draws live on (-sqrt(3), sqrt(3)): unit variance
    Mode mode = Mode::additive;
    std::int64_t concat_dim = 1; // D_noise, concat mode only
    double scale = 1.0;          // test hook; 0 silences the noise entirely
};

struct GcnConfig {
    enum class Agg { mean, sum, max };
    enum class Combine { add, concat };
    enum class Act { tanh, relu };
    int k_layers = 2;
    Agg aggregation = Agg::mean;
    Combine combine = Combine::add;
    Act activation = Act::tanh;
    std::int64_t hidden = 0; // conv width; 0 means "use D_embed"
};

struct ModelDims {
    std::int64_t p = 1;       // lookback
    std::int64_t q = 1;       // horizon
    std::int64_t n_nodes = 1; // N
    std::int64_t d = 1;       // features per node
    std::int64_t d_embed = 8; // D' (ignored by MVEN)
    std::int64_t d_hidden = 32;
    int lstm_layers = 1;
    double dropout = 0.0;
};

struct EngressionModel {
    ModelKind kind = ModelKind::mven;
    ModelDims dims;
    NoiseConfig noise;
    GcnConfig gcn;   // GCEN only
    GraphSpec graph; // GCEN/STEN; untouched for MVEN

    // Learnable parameters.
    std::vector<TensorPtr> gcn_theta; // per layer, [w_in, w]
    std::vector<TensorPtr> gcn_self;  // per layer, [w_in, w]
    std::vector<TensorPtr> gcn_bias;  // per layer
    TensorPtr gcn_proj_W, gcn_proj_b; // dense after the K conv layers -> D'
    std::vector<TensorPtr> star_phi;  // L+1 matrices [D, D']
    LstmStack lstm;                   // top layer carries the q*D head

    // Graph constants (never trained).
    TensorPtr agg_matrix;                             // [N,N] mean/sum neighbor operator
    std::vector<std::vector<std::int64_t>> neighbors; // for max aggregation
    std::vector<TensorPtr> w_power_const;             // [N,N] per spatial lag

    // Standardization statistics captured at training time; empty = identity.
    std::vector<double> node_mean, node_std; // length N*D

    std::vector<TensorPtr> parameters() const;
    std::int64_t lstm_input_dim() const;
    std::int64_t embed_dim() const; // D' (or D for MVEN)
};

EngressionModel make_model(ModelKind kind, const ModelDims& dims, const NoiseConfig& noise, const GcnConfig& gcn,
                           const GraphSpec& graph, Rng& rng);

// Spatial embeddings, exposed individually for verification.
TensorPtr gcn_embed(const EngressionModel& m, const TensorPtr& Y);          // [B,p,N,D] -> [B,p,N,D']
TensorPtr star_preactivation(const EngressionModel& m, const TensorPtr& Y); // before the ReLU
TensorPtr star_embed(const EngressionModel& m, const TensorPtr& Y);

// Perturb an embedding. Additive mode adds noise shaped like Z; concat mode
// appends concat_dim noise features. When capture is non-null the raw draws
// are appended to it.
TensorPtr inject_noise(const TensorPtr& Z, const NoiseConfig& cfg, Rng& rng, std::vector<double>* capture = nullptr);

// One forecast trajectory: [B,p,N,D] standardized window -> [B,q,N,D]
// standardized forecast. Consumes one noise draw from rng.
TensorPtr forward(const EngressionModel& m, const TensorPtr& window, Rng& rng, bool training = false,
                  std::vector<double>* noise_capture = nullptr);

struct ForecastEnsemble {
    std::int64_t m_members = 0, q = 0, n_nodes = 0, d = 1;
    double lower_q = 0.025, upper_q = 0.975;
    std::vector<double> trajectories;         // M*q*N*D, original units
    std::vector<double> median, lower, upper; // q*N*D, original units
    std::vector<double> captured_noise;       // opt-in: M consecutive noise blocks
    Shape noise_shape;                        // one trajectory's noise block shape [p,N,F]
};

struct SampleOptions {
    double lower_q = 0.025;
    double upper_q = 0.975;
    bool capture_noise = false;
};

// M independent forward passes with per-trajectory derived rng streams;
// quantiles by midpoint-convention interpolation; values mapped back to
// original units via the model's standardization statistics.
ForecastEnsemble sample_ensemble(const EngressionModel& m, const TensorPtr& window, std::int64_t M, const Rng& rng,
                                 const SampleOptions& opt = {});

// Bit-exact parameter round trip through a self-describing JSON document.
void save_model(const EngressionModel& m, const std::string& path);
EngressionModel load_model(const std::string& path);

} // namespace ste
