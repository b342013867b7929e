#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "etd/errors.hpp"

namespace etd {

enum class Architecture { kClassicalCnn, kDensenet1d, kMsDensenet };

/// Order of the transformations applied inside one convolutional unit.
enum class Ordering { kBnReluConv, kConvBnRelu };

/// One structural part of a dense block: an ordered list of
/// (filters, kernel_length) convolutions.
struct DensePartSpec {
    std::vector<std::pair<int, int>> layers;  // {filters, kernel_length}
    Ordering ordering = Ordering::kBnReluConv;
};

struct DenseBlockSpec {
    int parts = 6;
    DensePartSpec part;
};

struct TransitionSpec {
    double compression = 0.5;  // in (0, 1]
    int pool_stride = 1;       // 1 = no pooling
};

inline int transition_out_channels(int in_channels, const TransitionSpec& t) {
    return static_cast<int>(std::ceil(t.compression * in_channels));
}

struct ModelConfig {
    std::string name;
    Architecture architecture = Architecture::kMsDensenet;
    std::vector<DenseBlockSpec> blocks;
    std::vector<TransitionSpec> transitions;
    std::vector<int> head;  // fully-connected widths; last entry must be 1
    int input_length = 365;
    int input_channels = 1;
    // stem for the dense variants
    int stem_filters = 16;
    int stem_kernel = 7;
    // classical cnn body
    int cnn_filters = 32;
    int cnn_kernel = 7;
    int cnn_pool_window = 2;
    int cnn_pool_stride = 2;
};

inline void validate_config(const ModelConfig& cfg) {
    if (cfg.input_length < 1 || cfg.input_channels < 1)
        throw config_error("model config: input dimensions must be positive");
    if (cfg.head.empty() || cfg.head.back() != 1)
        throw config_error("model config: head must end in a single output unit");
    if (!cfg.blocks.empty() &&
        cfg.transitions.size() != cfg.blocks.size() - 1)
        throw config_error("model config: need one transition between consecutive blocks");
    for (const auto& b : cfg.blocks) {
        if (b.parts < 0) throw config_error("model config: negative part count");
        for (const auto& [f, k] : b.part.layers)
            if (f < 1 || k < 1)
                throw config_error("model config: filters and kernel lengths must be >= 1");
    }
    for (const auto& t : cfg.transitions) {
        if (!(t.compression > 0.0 && t.compression <= 1.0))
            throw config_error("model config: compression must lie in (0, 1]");
        if (t.pool_stride < 1) throw config_error("model config: pool stride must be >= 1");
    }
}

/// Two-conv classical CNN with the 64/32 fully-connected head.
inline ModelConfig default_classical_cnn() {
    ModelConfig cfg;
    cfg.name = "cnn";
    cfg.architecture = Architecture::kClassicalCnn;
    cfg.head = {64, 32, 1};
    return cfg;
}

/// Two dense blocks of six bottleneck parts (128 maps at k=1 feeding 32
/// maps at k=3), batch norm first inside each unit.
inline ModelConfig default_densenet1d() {
    ModelConfig cfg;
    cfg.name = "densenet1d";
    cfg.architecture = Architecture::kDensenet1d;
    DenseBlockSpec block;
    block.parts = 6;
    block.part.layers = {{128, 1}, {32, 3}};
    block.part.ordering = Ordering::kBnReluConv;
    cfg.blocks = {block, block};
    cfg.transitions = {TransitionSpec{}};
    cfg.head = {1};
    return cfg;
}

/// Two multi-scale dense blocks: six parts of four convolutions each
/// (24 conv layers per block) with kernel lengths shrinking from monthly
/// to short-term scale and convolution applied before batch norm.
inline ModelConfig default_ms_densenet() {
    ModelConfig cfg;
    cfg.name = "ms-densenet";
    cfg.architecture = Architecture::kMsDensenet;
    DenseBlockSpec block;
    block.parts = 6;
    block.part.layers = {{8, 30}, {6, 14}, {5, 7}, {4, 3}};
    block.part.ordering = Ordering::kConvBnRelu;
    cfg.blocks = {block, block};
    cfg.transitions = {TransitionSpec{}};
    cfg.head = {1};
    return cfg;
}

inline ModelConfig default_config(Architecture a) {
    switch (a) {
        case Architecture::kClassicalCnn: return default_classical_cnn();
        case Architecture::kDensenet1d: return default_densenet1d();
        case Architecture::kMsDensenet: return default_ms_densenet();
    }
    throw config_error("unknown architecture");
}

} // namespace etd
