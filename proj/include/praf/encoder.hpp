#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "praf/image.hpp"
#include "praf/tensor.hpp"

namespace praf {

struct EncoderConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t depth = 4;
    std::size_t embed_dim = 64;
    std::size_t num_heads = 4;
    std::uint64_t seed = 1;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t patch_count() const { return grid() * grid(); }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t mlp_dim() const { return 4 * embed_dim; }

    void validate() const;
};

struct BlockParams {
    std::vector<double> ln1_g, ln1_b;
    std::vector<double> wq, bq, wk, bk, wv, bv, wo, bo;
    std::vector<double> ln2_g, ln2_b;
    std::vector<double> w1, b1, w2, b2;
};

struct EncoderParams {
    std::vector<double> patch_w, patch_b;  // {p*p*3, d}, {d}
    std::vector<double> cls;               // {d}
    std::vector<double> pos;               // {P+1, d}
    std::vector<BlockParams> blocks;
};

/// Per-layer taps from one forward pass: cls[l] is the {d} CLS embedding
/// after block l+1, patches[l] the {P,d} patch token matrix.
struct LayerTaps {
    std::vector<Tensor> cls;
    std::vector<Tensor> patches;
    std::size_t depth() const { return cls.size(); }
};

/// Plain (tape-free) copies of tap values, used to cache target-side
/// features across attack iterations.
struct TapValues {
    std::vector<std::vector<double>> cls;
    std::vector<std::vector<double>> patches;
    std::size_t depth() const { return cls.size(); }
};

/// Pre-norm toy ViT with a prepended CLS token and learned positional
/// embeddings. Parameters are fixed at construction; forward passes record
/// onto a caller-supplied tape, so one encoder can serve many threads.
class SurrogateEncoder {
  public:
    explicit SurrogateEncoder(const EncoderConfig& config);
    SurrogateEncoder(const EncoderConfig& config, EncoderParams params);

    const EncoderConfig& config() const { return config_; }
    const EncoderParams& params() const { return params_; }

    /// Full differentiable forward pass; image must be {H,H,3}.
    LayerTaps encode_with_taps(Tape& tape, Tensor image) const;

    /// Forward on a scratch tape, copying tap values out.
    TapValues encode_values(const ImageTensor& image) const;

    /// Wrap cached tap values as constants on the given tape.
    LayerTaps taps_as_constants(Tape& tape, const TapValues& values) const;

    void dump_parameters(const std::string& path) const;
    static SurrogateEncoder load_parameters(const std::string& path);

  private:
    EncoderConfig config_;
    EncoderParams params_;
    std::shared_ptr<const std::vector<std::size_t>> patch_map_;
};

using Ensemble = std::vector<SurrogateEncoder>;

/// All encoders must share image_size; at least one config required.
Ensemble build_ensemble(const std::vector<EncoderConfig>& configs);

}  // namespace praf
