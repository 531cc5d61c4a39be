#include "praf/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

namespace praf {

static_assert(std::endian::native == std::endian::little,
              "parameter dump format assumes a little-endian host");

void EncoderConfig::validate() const {
    if (image_size == 0 || patch_size == 0) throw ConfigError("encoder: sizes must be positive");
    if (image_size % patch_size != 0)
        throw ConfigError("encoder: patch size must divide image size");
    if (depth < 2) throw ConfigError("encoder: depth must be >= 2");
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
        throw ConfigError("encoder: head count must divide embed dim");
}

namespace {

struct ParamSampler {
    std::mt19937_64 rng;
    std::normal_distribution<double> normal{0.0, 0.02};

    explicit ParamSampler(std::uint64_t seed) : rng(seed) {}

    std::vector<double> draw(std::size_t n, double mean = 0.0) {
        std::vector<double> out(n);
        for (double& v : out) v = mean + normal(rng);
        return out;
    }
};

std::shared_ptr<const std::vector<std::size_t>> build_patch_map(const EncoderConfig& cfg) {
    const std::size_t H = cfg.image_size, p = cfg.patch_size, g = cfg.grid();
    auto map = std::make_shared<std::vector<std::size_t>>(cfg.patch_count() * p * p * 3);
    std::size_t k = 0;
    for (std::size_t py = 0; py < g; ++py)
        for (std::size_t px = 0; px < g; ++px)
            for (std::size_t dy = 0; dy < p; ++dy)
                for (std::size_t dx = 0; dx < p; ++dx)
                    for (std::size_t c = 0; c < 3; ++c)
                        (*map)[k++] = ((py * p + dy) * H + (px * p + dx)) * 3 + c;
    return map;
}

EncoderParams init_params(const EncoderConfig& cfg) {
    // Single draw stream per seed; order is fixed and is also the dump/load
    // array order. Layer-norm scales are drawn around 1 so block outputs
    // keep a usable signal scale.
    ParamSampler s(cfg.seed);
    const std::size_t d = cfg.embed_dim;
    EncoderParams params;
    params.patch_w = s.draw(cfg.patch_size * cfg.patch_size * 3 * d);
    params.patch_b = s.draw(d);
    params.cls = s.draw(d);
    params.pos = s.draw((cfg.patch_count() + 1) * d);
    params.blocks.resize(cfg.depth);
    for (BlockParams& b : params.blocks) {
        b.ln1_g = s.draw(d, 1.0);
        b.ln1_b = s.draw(d);
        b.wq = s.draw(d * d);
        b.bq = s.draw(d);
        b.wk = s.draw(d * d);
        b.bk = s.draw(d);
        b.wv = s.draw(d * d);
        b.bv = s.draw(d);
        b.wo = s.draw(d * d);
        b.bo = s.draw(d);
        b.ln2_g = s.draw(d, 1.0);
        b.ln2_b = s.draw(d);
        b.w1 = s.draw(d * cfg.mlp_dim());
        b.b1 = s.draw(cfg.mlp_dim());
        b.w2 = s.draw(cfg.mlp_dim() * d);
        b.b2 = s.draw(d);
    }
    return params;
}

}  // namespace

SurrogateEncoder::SurrogateEncoder(const EncoderConfig& config) : config_(config) {
    config_.validate();
    params_ = init_params(config_);
    patch_map_ = build_patch_map(config_);
}

SurrogateEncoder::SurrogateEncoder(const EncoderConfig& config, EncoderParams params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    patch_map_ = build_patch_map(config_);
}

LayerTaps SurrogateEncoder::encode_with_taps(Tape& tape, Tensor image) const {
    const std::size_t H = config_.image_size, d = config_.embed_dim, P = config_.patch_count();
    const Shape expected{H, H, 3};
    if (image.shape() != expected)
        throw ShapeError("encode_with_taps: image must be " + std::to_string(H) + "x" +
                         std::to_string(H) + "x3");

    const std::size_t patch_dim = config_.patch_size * config_.patch_size * 3;
    Tensor patches_px = gather(image, patch_map_, {P, patch_dim});
    Tensor w = tape.constant({patch_dim, d}, params_.patch_w);
    Tensor b = tape.constant({d}, params_.patch_b);
    Tensor tok = add_rowvec(matmul(patches_px, w), b);

    Tensor cls_row = tape.constant({1, d}, std::vector<double>(params_.cls));
    Tensor x = concat(cls_row, tok, 0);
    x = add(x, tape.constant({P + 1, d}, params_.pos));

    const std::size_t heads = config_.num_heads, dh = config_.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    LayerTaps taps;
    for (const BlockParams& blk : params_.blocks) {
        Tensor h1 = layer_norm(x);
        h1 = add_rowvec(mul_rowvec(h1, tape.constant({d}, blk.ln1_g)), tape.constant({d}, blk.ln1_b));
        Tensor q = add_rowvec(matmul(h1, tape.constant({d, d}, blk.wq)), tape.constant({d}, blk.bq));
        Tensor k = add_rowvec(matmul(h1, tape.constant({d, d}, blk.wk)), tape.constant({d}, blk.bk));
        Tensor v = add_rowvec(matmul(h1, tape.constant({d, d}, blk.wv)), tape.constant({d}, blk.bv));
        Tensor merged;
        for (std::size_t h = 0; h < heads; ++h) {
            Tensor qh = slice(q, 1, h * dh, dh);
            Tensor kh = slice(k, 1, h * dh, dh);
            Tensor vh = slice(v, 1, h * dh, dh);
            Tensor att = softmax_rows(scalar_mul(matmul(qh, transpose(kh)), attn_scale));
            Tensor oh = matmul(att, vh);
            merged = h == 0 ? oh : concat(merged, oh, 1);
        }
        Tensor att_out =
            add_rowvec(matmul(merged, tape.constant({d, d}, blk.wo)), tape.constant({d}, blk.bo));
        x = add(x, att_out);

        Tensor h2 = layer_norm(x);
        h2 = add_rowvec(mul_rowvec(h2, tape.constant({d}, blk.ln2_g)), tape.constant({d}, blk.ln2_b));
        Tensor hidden = gelu(add_rowvec(matmul(h2, tape.constant({d, config_.mlp_dim()}, blk.w1)),
                                        tape.constant({config_.mlp_dim()}, blk.b1)));
        Tensor mlp_out = add_rowvec(matmul(hidden, tape.constant({config_.mlp_dim(), d}, blk.w2)),
                                    tape.constant({d}, blk.b2));
        x = add(x, mlp_out);

        taps.cls.push_back(reshape(slice(x, 0, 0, 1), {d}));
        taps.patches.push_back(slice(x, 0, 1, P));
    }
    return taps;
}

TapValues SurrogateEncoder::encode_values(const ImageTensor& image) const {
    Tape tape;
    LayerTaps taps = encode_with_taps(tape, image_constant(tape, image));
    TapValues out;
    out.cls.reserve(taps.depth());
    out.patches.reserve(taps.depth());
    for (std::size_t l = 0; l < taps.depth(); ++l) {
        out.cls.push_back(taps.cls[l].values());
        out.patches.push_back(taps.patches[l].values());
    }
    return out;
}

LayerTaps SurrogateEncoder::taps_as_constants(Tape& tape, const TapValues& values) const {
    if (values.depth() != config_.depth)
        throw ContractError("taps_as_constants: cached depth does not match encoder");
    LayerTaps taps;
    const std::size_t d = config_.embed_dim, P = config_.patch_count();
    for (std::size_t l = 0; l < values.depth(); ++l) {
        taps.cls.push_back(tape.constant({d}, values.cls[l]));
        taps.patches.push_back(tape.constant({P, d}, values.patches[l]));
    }
    return taps;
}

// ---------------------------------------------------------------------------
// parameter dump / load: "PRAF" magic, u32 version, u64 config fields, then
// shape-prefixed f64 arrays in init order.

namespace {

constexpr std::uint32_t kDumpVersion = 1;

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

void write_raw(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) throw IoError("short write to '" + path + "'");
}

void read_raw(std::FILE* f, void* p, std::size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n) throw IoError("short read from '" + path + "'");
}

void write_u32(std::FILE* f, std::uint32_t v, const std::string& path) { write_raw(f, &v, 4, path); }
void write_u64(std::FILE* f, std::uint64_t v, const std::string& path) { write_raw(f, &v, 8, path); }

std::uint32_t read_u32(std::FILE* f, const std::string& path) {
    std::uint32_t v = 0;
    read_raw(f, &v, 4, path);
    return v;
}
std::uint64_t read_u64(std::FILE* f, const std::string& path) {
    std::uint64_t v = 0;
    read_raw(f, &v, 8, path);
    return v;
}

void write_array(std::FILE* f, const std::vector<double>& a, const std::string& path) {
    write_u64(f, a.size(), path);
    write_raw(f, a.data(), a.size() * sizeof(double), path);
}

std::vector<double> read_array(std::FILE* f, std::size_t expected, const std::string& path) {
    const std::uint64_t n = read_u64(f, path);
    if (n != expected)
        throw IoError("'" + path + "': array length " + std::to_string(n) + " != expected " +
                      std::to_string(expected));
    std::vector<double> a(n);
    read_raw(f, a.data(), n * sizeof(double), path);
    return a;
}

template <typename Fn>
void for_each_array(EncoderParams& p, Fn&& fn) {
    fn(p.patch_w);
    fn(p.patch_b);
    fn(p.cls);
    fn(p.pos);
    for (BlockParams& b : p.blocks) {
        fn(b.ln1_g);
        fn(b.ln1_b);
        fn(b.wq);
        fn(b.bq);
        fn(b.wk);
        fn(b.bk);
        fn(b.wv);
        fn(b.bv);
        fn(b.wo);
        fn(b.bo);
        fn(b.ln2_g);
        fn(b.ln2_b);
        fn(b.w1);
        fn(b.b1);
        fn(b.w2);
        fn(b.b2);
    }
}

}  // namespace

void SurrogateEncoder::dump_parameters(const std::string& path) const {
    FileCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) throw IoError("cannot open '" + path + "' for writing");
    write_raw(fc.f, "PRAF", 4, path);
    write_u32(fc.f, kDumpVersion, path);
    write_u64(fc.f, config_.image_size, path);
    write_u64(fc.f, config_.patch_size, path);
    write_u64(fc.f, config_.depth, path);
    write_u64(fc.f, config_.embed_dim, path);
    write_u64(fc.f, config_.num_heads, path);
    write_u64(fc.f, config_.seed, path);
    auto& params = const_cast<EncoderParams&>(params_);
    for_each_array(params, [&](std::vector<double>& a) { write_array(fc.f, a, path); });
}

SurrogateEncoder SurrogateEncoder::load_parameters(const std::string& path) {
    FileCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) throw IoError("cannot open '" + path + "'");
    char magic[4];
    read_raw(fc.f, magic, 4, path);
    if (std::memcmp(magic, "PRAF", 4) != 0) throw IoError("'" + path + "': bad magic");
    if (read_u32(fc.f, path) != kDumpVersion) throw IoError("'" + path + "': unsupported version");
    EncoderConfig cfg;
    cfg.image_size = read_u64(fc.f, path);
    cfg.patch_size = read_u64(fc.f, path);
    cfg.depth = read_u64(fc.f, path);
    cfg.embed_dim = read_u64(fc.f, path);
    cfg.num_heads = read_u64(fc.f, path);
    cfg.seed = read_u64(fc.f, path);
    cfg.validate();

    // Sizing pass mirrors init order, then each array is read in place.
    EncoderParams params;
    const std::size_t d = cfg.embed_dim;
    params.patch_w.resize(cfg.patch_size * cfg.patch_size * 3 * d);
    params.patch_b.resize(d);
    params.cls.resize(d);
    params.pos.resize((cfg.patch_count() + 1) * d);
    params.blocks.resize(cfg.depth);
    for (BlockParams& b : params.blocks) {
        b.ln1_g.resize(d);
        b.ln1_b.resize(d);
        b.wq.resize(d * d);
        b.bq.resize(d);
        b.wk.resize(d * d);
        b.bk.resize(d);
        b.wv.resize(d * d);
        b.bv.resize(d);
        b.wo.resize(d * d);
        b.bo.resize(d);
        b.ln2_g.resize(d);
        b.ln2_b.resize(d);
        b.w1.resize(d * cfg.mlp_dim());
        b.b1.resize(cfg.mlp_dim());
        b.w2.resize(cfg.mlp_dim() * d);
        b.b2.resize(d);
    }
    for_each_array(params,
                   [&](std::vector<double>& a) { a = read_array(fc.f, a.size(), path); });
    return SurrogateEncoder(cfg, std::move(params));
}

Ensemble build_ensemble(const std::vector<EncoderConfig>& configs) {
    if (configs.empty()) throw ConfigError("ensemble: need at least one encoder config");
    for (const EncoderConfig& cfg : configs)
        if (cfg.image_size != configs.front().image_size)
            throw ConfigError("ensemble: all encoders must share the same image size");
    Ensemble out;
    out.reserve(configs.size());
    for (const EncoderConfig& cfg : configs) out.emplace_back(cfg);
    return out;
}

}  // namespace praf
