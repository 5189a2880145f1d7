#include "spiketk/snn_runtime.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spiketk/error.hpp"

namespace spiketk {

namespace {

// Mean anchored at the first element: exact when all values are equal.
double shifted_mean(std::span<const double> x) {
    const double anchor = x.front();
    double dev = 0.0;
    for (double v : x) dev += v - anchor;
    return anchor + dev / static_cast<double>(x.size());
}

double mean_abs(std::span<const double> x) {
    std::vector<double> a(x.size());
    std::transform(x.begin(), x.end(), a.begin(), [](double v) { return std::fabs(v); });
    return shifted_mean(a);
}

bool is_binary(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

std::uint64_t ones(std::span<const double> x) {
    return static_cast<std::uint64_t>(std::count(x.begin(), x.end(), 1.0));
}

std::vector<std::uint8_t> to_bytes(std::span<const double> x) {
    std::vector<std::uint8_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] == 1.0 ? 1 : 0;
    return out;
}

// Exact MAC count of a dense convolution, borders excluded.
std::uint64_t dense_conv_macs(std::size_t channels, std::size_t height, std::size_t width, std::size_t k,
                              std::size_t stride, std::size_t padding, std::size_t out_channels) {
    const std::vector<std::uint8_t> all(channels * height * width, 1);
    return count_conv_sops_exact(all, channels, height, width, k, k, stride, padding, out_channels);
}

Tensor sn_tensor(const Tensor& x, double alpha, bool per_token) {
    Tensor out(x.shape());
    const std::size_t rows = x.dim(0);
    const std::size_t cols = x.dim(1);
    if (!per_token) {
        const auto r = sn_threshold(x.values(), alpha);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.spikes[i];
        return out;
    }
    for (std::size_t i = 0; i < rows; ++i) {
        const auto r = sn_threshold(x.values().subspan(i * cols, cols), alpha);
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = r.spikes[j];
    }
    return out;
}

void record_linear(EnergyLedger* ledger, const std::string& name, const Tensor& input, std::size_t out_dim) {
    if (!ledger) return;
    const std::uint64_t elements = input.size();
    const std::uint64_t dense = elements * out_dim;
    LayerRecord r{name, 0, elements, out_dim, dense, 0, dense};
    if (is_binary(input.values())) {
        r.spike_count = ones(input.values());
        r.actual_sops = r.spike_count * out_dim;
    } else {
        r.spike_count = elements;  // analog input: every element drives every output
    }
    ledger->add(r);
}

}  // namespace

void LifParams::validate() const {
    require(thresh > 0.0, "LIF thresh must be positive");
    require(decay > 0.0 && decay <= 1.0, "LIF decay must lie in (0, 1]");
    require(lens > 0.0, "surrogate lens must be positive");
}

LifStep lif_step(MembraneState state, std::span<const double> input, const LifParams& p) {
    p.validate();
    require(input.size() == state.u.size(), "LIF input size " + std::to_string(input.size()) +
                                                " != neuron count " + std::to_string(state.u.size()));
    std::vector<std::uint8_t> spikes(input.size(), 0);
    for (std::size_t i = 0; i < input.size(); ++i) {
        double u = p.decay * state.u[i] + input[i];
        if (u >= p.thresh) {
            spikes[i] = 1;
            u = p.reset == ResetMode::hard ? 0.0 : u - p.thresh;
        }
        state.u[i] = u;
    }
    ++state.step_index;
    return {std::move(spikes), std::move(state)};
}

Tensor lif_sequence(const Tensor& pre, const LifParams& p) {
    require(pre.rank() >= 1 && pre.dim(0) >= 1, "LIF sequence needs a time axis");
    const std::size_t steps = pre.dim(0);
    const std::size_t n = pre.size() / steps;
    Tensor out(pre.shape());
    MembraneState state = MembraneState::zeros(n);
    for (std::size_t t = 0; t < steps; ++t) {
        auto step = lif_step(std::move(state), pre.values().subspan(t * n, n), p);
        for (std::size_t i = 0; i < n; ++i) out[t * n + i] = step.spikes[i];
        state = std::move(step.state);
    }
    return out;
}

double surrogate_grad(double u, const LifParams& p) {
    return std::fabs(u - p.thresh) <= p.lens ? 1.0 / (2.0 * p.lens) : 0.0;
}

FeatureTensor tdbn(const FeatureTensor& x, std::span<const double> gamma, std::span<const double> beta,
                   double eps) {
    require(eps > 0.0, "TDBN eps must be positive");
    const auto& axes = x.axes();
    const auto it = std::find(axes.begin(), axes.end(), Axis::channel);
    require(it != axes.end(), "TDBN needs a channel axis");
    const auto axis = static_cast<std::size_t>(it - axes.begin());
    const Tensor& in = x.tensor();
    const std::size_t channels = in.dim(axis);
    require(gamma.size() == channels && beta.size() == channels, "TDBN gamma/beta length mismatch");
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < in.rank(); ++a) inner *= in.dim(a);
    const std::size_t per_channel = in.size() / channels;
    require(per_channel >= 2, "TDBN needs at least two elements per channel");

    std::vector<double> mean(channels, 0.0);
    std::vector<double> var(channels, 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) mean[(i / inner) % channels] += in[i];
    for (double& m : mean) m /= static_cast<double>(per_channel);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t c = (i / inner) % channels;
        var[c] += (in[i] - mean[c]) * (in[i] - mean[c]);
    }
    for (double& v : var) v /= static_cast<double>(per_channel);

    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t c = (i / inner) % channels;
        out[i] = (in[i] - mean[c]) / std::sqrt(var[c] + eps) * gamma[c] + beta[c];
    }
    return FeatureTensor(std::move(out), axes);
}

SnResult sn_threshold(std::span<const double> x, double alpha) {
    require(!x.empty(), "spike normalization of an empty array");
    require(alpha > 0.0, "spike normalization alpha must be positive");
    const double v_th = alpha * mean_abs(x);
    return {sn_apply(x, v_th), v_th};
}

std::vector<std::uint8_t> sn_apply(std::span<const double> x, double v_th) {
    std::vector<std::uint8_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= v_th ? 1 : 0;
    return out;
}

FeatureTensor spiking_residual_block(const FeatureTensor& spikes, const Tensor& conv_weight,
                                     std::span<const double> gamma, std::span<const double> beta,
                                     const LifParams& p, EnergyLedger* ledger, const std::string& name) {
    const std::vector<Axis> expected{Axis::time, Axis::batch, Axis::channel, Axis::height, Axis::width};
    require(spikes.axes() == expected, "spiking residual block expects [T,B,C,H,W]");
    const Tensor& s = spikes.tensor();
    require(is_binary(s.values()), "spiking residual block input must be binary");
    const std::size_t steps = s.dim(0), batch = s.dim(1), channels = s.dim(2), height = s.dim(3), width = s.dim(4);
    require(conv_weight.shape() == std::vector<std::size_t>{channels, channels, 3, 3},
            "residual conv weight must be [C,C,3,3], got " + conv_weight.shape_string());

    const std::size_t plane = channels * height * width;
    Tensor pre(s.shape());
    LayerRecord record{name, 0, 0, conv_fan_out(3, 3, channels), 0, 0, std::uint64_t{0}};
    for (std::size_t tb = 0; tb < steps * batch; ++tb) {
        Tensor frame({channels, height, width},
                     std::vector<double>(s.data() + tb * plane, s.data() + (tb + 1) * plane));
        const Tensor y = conv2d(frame, conv_weight, {}, 1, 1);
        std::copy(y.values().begin(), y.values().end(), pre.data() + tb * plane);
        const auto bytes = to_bytes(frame.values());
        record.spike_count += ones(frame.values());
        record.element_count += plane;
        record.actual_sops += count_conv_sops_exact(bytes, channels, height, width, 3, 3, 1, 1, channels);
        *record.max_sops += dense_conv_macs(channels, height, width, 3, 1, 1, channels);
    }
    record.neuron_ops = steps * batch * plane;

    Tensor potential = tdbn(FeatureTensor(std::move(pre), expected), gamma, beta).tensor();
    for (std::size_t i = 0; i < potential.size(); ++i) potential[i] += s[i];
    Tensor out = lif_sequence(potential, p);
    ensure(is_binary(out.values()), "spiking residual block produced a non-binary value");
    if (ledger) ledger->add(record);
    return FeatureTensor(std::move(out), expected);
}

void SdsaParams::validate() const {
    require(alpha_sn > 0.0, "SDSA alpha must be positive");
    require(d >= 1, "SDSA head dimension must be >= 1");
    require(scale >= 0.0, "SDSA scale must be positive (0 selects 1/sqrt(d))");
}

double SdsaParams::effective_scale() const {
    return scale > 0.0 ? scale : 1.0 / std::sqrt(static_cast<double>(d));
}

Tensor esdsa_forward(const Tensor& tokens, const SdsaParams& params, const SdsaWeights& weights,
                     EnergyLedger* ledger, SdsaTrace* trace, const std::string& name) {
    params.validate();
    require(tokens.rank() == 2 && tokens.dim(1) == params.d,
            "E-SDSA expects tokens [N, " + std::to_string(params.d) + "], got " + tokens.shape_string());
    const std::size_t n = tokens.dim(0);
    const std::size_t d = params.d;
    require(n >= 1, "E-SDSA needs at least one token");

    const Tensor q_s = sn_tensor(linear(tokens, weights.wq, weights.bq), params.alpha_sn, params.per_token);
    const Tensor k_s = sn_tensor(linear(tokens, weights.wk, weights.bk), params.alpha_sn, params.per_token);
    const Tensor v_s = sn_tensor(linear(tokens, weights.wv, weights.bv), params.alpha_sn, params.per_token);
    record_linear(ledger, name + ".q", tokens, d);
    record_linear(ledger, name + ".k", tokens, d);
    record_linear(ledger, name + ".v", tokens, d);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor corr({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += q_s.at(i, c) * k_s.at(j, c);
            corr.at(i, j) = dot * inv_sqrt_d;
        }
    }

    // V_th = α·E|corr ⊙ scale| = scale·α·E|corr|, so V_th/scale = α·E|corr|.
    const double scale = params.effective_scale();
    Tensor attn({n, n});
    double v_th_inner = 0.0;
    double v_th_reparam = 0.0;
    const auto threshold_rows = [&](std::size_t row0, std::size_t rows) {
        const auto block = corr.values().subspan(row0 * n, rows * n);
        const double reparam = params.alpha_sn * mean_abs(block);
        const auto s = sn_apply(block, reparam);
        for (std::size_t i = 0; i < s.size(); ++i) attn[row0 * n + i] = s[i];
        v_th_reparam = reparam;
        v_th_inner = reparam * scale;
    };
    if (params.per_token) {
        for (std::size_t i = 0; i < n; ++i) threshold_rows(i, 1);
    } else {
        threshold_rows(0, n);
    }

    Tensor av({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (attn.at(i, j) == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) av.at(i, c) += v_s.at(j, c);
        }
    }
    Tensor out = linear(av, weights.wo, weights.bo);

    if (ledger) {
        std::uint64_t qk = 0;
        std::uint64_t attn_v = 0;
        for (std::size_t c = 0; c < d; ++c) {
            std::uint64_t qc = 0, kc = 0;
            for (std::size_t i = 0; i < n; ++i) {
                qc += q_s.at(i, c) == 1.0;
                kc += k_s.at(i, c) == 1.0;
            }
            qk += qc * kc;
        }
        for (std::size_t j = 0; j < n; ++j) {
            std::uint64_t aj = 0, vj = 0;
            for (std::size_t i = 0; i < n; ++i) aj += attn.at(i, j) == 1.0;
            for (std::size_t c = 0; c < d; ++c) vj += v_s.at(j, c) == 1.0;
            attn_v += aj * vj;
        }
        const std::uint64_t nd = n * d;
        ledger->add({name + ".qk", ones(q_s.values()), nd, n, qk, 3 * nd, n * n * d});
        ledger->add({name + ".attn_v", ones(attn.values()), n * n, d, attn_v, n * n, n * n * d});
        record_linear(ledger, name + ".out", av, weights.wo.dim(0));
    }

    if (trace) {
        trace->q_s = q_s;
        trace->k_s = k_s;
        trace->v_s = v_s;
        trace->correlation = corr;
        trace->attention = attn;
        trace->v_th_inner = v_th_inner;
        trace->v_th_reparam = v_th_reparam;
    }
    ensure(is_binary(q_s.values()) && is_binary(k_s.values()) && is_binary(v_s.values()) &&
               is_binary(attn.values()),
           "E-SDSA produced a non-binary spike tensor");
    return out;
}

void FsveConfig::validate() const {
    require(timesteps >= 1, "FSVE needs at least one time step");
    require(in_channels >= 1 && channels >= 1 && pool >= 1, "FSVE widths must be positive");
    lif.validate();
    require(sdsa_alpha > 0.0, "FSVE sdsa alpha must be positive");
}

SdsaWeights sdsa_weights(const WeightSet& weights, const std::string& prefix, std::size_t d) {
    SdsaWeights w;
    w.wq = weights.get(prefix + ".q.w", {d, d});
    w.wk = weights.get(prefix + ".k.w", {d, d});
    w.wv = weights.get(prefix + ".v.w", {d, d});
    w.wo = weights.get(prefix + ".out.w", {d, d});
    w.bq = weights.vector(prefix + ".q.b", d);
    w.bk = weights.vector(prefix + ".k.b", d);
    w.bv = weights.vector(prefix + ".v.b", d);
    w.bo = weights.vector(prefix + ".out.b", d);
    return w;
}

FsveResult fsve_forward(const SpikeStream& clip, const FsveConfig& cfg, const WeightSet& weights) {
    cfg.validate();
    const std::size_t steps = cfg.timesteps;
    const std::size_t segment = clip.t_len() / steps;
    require(segment >= cfg.in_channels, "clip has " + std::to_string(clip.t_len()) + " frames, need at least " +
                                            std::to_string(steps * cfg.in_channels));
    const std::size_t height = clip.height();
    const std::size_t width = clip.width();
    const std::size_t c = cfg.channels;
    const std::vector<Axis> axes5{Axis::time, Axis::batch, Axis::channel, Axis::height, Axis::width};

    FsveResult result;
    const auto check_binary = [&](const Tensor& t, const char* what) {
        ensure(is_binary(t.values()), std::string("non-binary spike tensor after ") + what);
        ++result.spike_tensors_checked;
    };

    // Spiking stem: conv 3×3 stride 2 on binary frames, TDBN, LIF.
    const Tensor& stem_w = weights.get("fsve.encoder.conv.w", {c, cfg.in_channels, 3, 3});
    const std::size_t oh = (height - 1) / 2 + 1;
    const std::size_t ow = (width - 1) / 2 + 1;
    Tensor pre({steps, 1, c, oh, ow});
    LayerRecord stem{"fsve.encoder", 0, 0, conv_fan_out(3, 3, c), 0, 0, std::uint64_t{0}};
    for (std::size_t t = 0; t < steps; ++t) {
        const auto idx = subsample_indices(segment, cfg.in_channels);
        Tensor frames({cfg.in_channels, height, width});
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto f = clip.frame(t * segment + idx[k]);
            for (std::size_t i = 0; i < f.size(); ++i) frames[k * f.size() + i] = f[i];
        }
        check_binary(frames, "input framing");
        const Tensor y = conv2d(frames, stem_w, {}, 2, 1);
        std::copy(y.values().begin(), y.values().end(), pre.data() + t * y.size());
        const auto bytes = to_bytes(frames.values());
        stem.spike_count += ones(frames.values());
        stem.element_count += frames.size();
        stem.actual_sops += count_conv_sops_exact(bytes, cfg.in_channels, height, width, 3, 3, 2, 1, c);
        *stem.max_sops += dense_conv_macs(cfg.in_channels, height, width, 3, 2, 1, c);
    }
    stem.neuron_ops = pre.size();
    result.ledger.add(stem);

    const auto gamma0 = weights.vector("fsve.encoder.bn.gamma", c);
    const auto beta0 = weights.vector("fsve.encoder.bn.beta", c);
    Tensor s = lif_sequence(tdbn(FeatureTensor(std::move(pre), axes5), gamma0, beta0).tensor(), cfg.lif);
    check_binary(s, "spiking stem");
    FeatureTensor spikes(std::move(s), axes5);

    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string prefix = "fsve.block" + std::to_string(b);
        spikes = spiking_residual_block(spikes, weights.get(prefix + ".conv.w", {c, c, 3, 3}),
                                        weights.vector(prefix + ".bn.gamma", c),
                                        weights.vector(prefix + ".bn.beta", c), cfg.lif, &result.ledger, prefix);
        check_binary(spikes.tensor(), "spiking residual block");
    }

    // Binary max-pool (logical OR over pool×pool patches) to tokens.
    const std::size_t th = (oh + cfg.pool - 1) / cfg.pool;
    const std::size_t tw = (ow + cfg.pool - 1) / cfg.pool;
    const std::size_t n_tokens = th * tw;
    SdsaParams sp;
    sp.alpha_sn = cfg.sdsa_alpha;
    sp.d = c;
    const auto sw = sdsa_weights(weights, "fsve.sdsa", c);
    std::vector<double> embedding(c, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor tokens({n_tokens, c});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    if (spikes.tensor().at(t, 0, ch, y, x) == 1.0) {
                        tokens.at((y / cfg.pool) * tw + x / cfg.pool, ch) = 1.0;
                    }
                }
            }
        }
        check_binary(tokens, "token pooling");
        SdsaTrace trace;
        const Tensor u = esdsa_forward(tokens, sp, sw, &result.ledger, &trace, "fsve.sdsa");
        check_binary(trace.q_s, "E-SDSA query");
        check_binary(trace.k_s, "E-SDSA key");
        check_binary(trace.v_s, "E-SDSA value");
        check_binary(trace.attention, "E-SDSA attention");
        for (std::size_t i = 0; i < n_tokens; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) embedding[ch] += u.at(i, ch);
        }
    }
    for (double& v : embedding) v /= static_cast<double>(steps * n_tokens);
    result.embedding = std::move(embedding);
    return result;
}

WeightSet init_fsve_weights(const FsveConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    WeightInit init(seed);
    WeightSet w;
    w.seed = seed;
    const std::size_t c = cfg.channels;
    w.put("fsve.encoder.conv.w", init.uniform({c, cfg.in_channels, 3, 3}, cfg.in_channels * 9));
    w.put("fsve.encoder.bn.gamma", WeightInit::constant({c}, 1.0));
    w.put("fsve.encoder.bn.beta", WeightInit::constant({c}, 0.0));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string prefix = "fsve.block" + std::to_string(b);
        w.put(prefix + ".conv.w", init.uniform({c, c, 3, 3}, c * 9));
        w.put(prefix + ".bn.gamma", WeightInit::constant({c}, 1.0));
        w.put(prefix + ".bn.beta", WeightInit::constant({c}, 0.0));
    }
    for (const char* proj : {"q", "k", "v", "out"}) {
        const std::string prefix = std::string("fsve.sdsa.") + proj;
        w.put(prefix + ".w", init.uniform({c, c}, c));
        w.put(prefix + ".b", WeightInit::constant({c}, 0.0));
    }
    return w;
}

}  // namespace spiketk
