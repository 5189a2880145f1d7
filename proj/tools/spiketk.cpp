#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spiketk/align.hpp"
#include "spiketk/energy_meter.hpp"
#include "spiketk/error.hpp"
#include "spiketk/image_io.hpp"
#include "spiketk/pipeline.hpp"
#include "spiketk/reconstructor.hpp"
#include "spiketk/snn_runtime.hpp"
#include "spiketk/synth.hpp"

namespace fs = std::filesystem;
using namespace spiketk;
using nlohmann::json;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string meta;
    std::string out;
};

std::uint64_t need_seed(const Globals& g, const std::string& cmd) {
    require(g.seed.has_value(), cmd + " requires --seed");
    return *g.seed;
}

std::string need_out(const Globals& g, const std::string& cmd) {
    require(!g.out.empty(), cmd + " requires --out");
    return g.out;
}

PipelineConfig config_of(const Globals& g) {
    return g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
}

Provenance provenance(const std::string& cmd, std::optional<std::uint64_t> seed, const std::vector<fs::path>& inputs) {
    Provenance p;
    p.command = cmd;
    p.seed = seed;
    for (const auto& in : inputs) {
        if (fs::is_regular_file(in)) p.add_input(in);
    }
    return p;
}

std::pair<SpikeStream, StreamMeta> load_stream(const Globals& g, const fs::path& dat) {
    if (!fs::exists(dat)) throw IoError("cannot open " + dat.string());
    const fs::path meta_path = g.meta.empty() ? sidecar_path(dat) : fs::path(g.meta);
    if (!fs::exists(meta_path)) {
        throw PreconditionError(dat.string() + " has no sidecar " + meta_path.string() + "; pass --meta FILE");
    }
    const StreamMeta meta = read_meta(meta_path);
    return {read_dat(dat, meta), meta};
}

void save_stream(const SpikeStream& s, const StreamMeta& meta, const fs::path& out, const Provenance& p) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_dat(s, meta, out);
    write_meta(meta, sidecar_path(out), &p);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
}

std::vector<std::size_t> parse_topk(const std::string& text) {
    std::vector<std::size_t> ks;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            require(used == item.size() && v >= 1, "");
            ks.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw PreconditionError("bad --topk entry '" + item + "'");
        }
    }
    require(!ks.empty(), "--topk needs at least one value");
    return ks;
}

struct Labeled {
    Tensor features;
    std::vector<std::size_t> labels;
};

Labeled label_rows(const std::vector<LabeledEmbedding>& rows, const std::vector<ClassPrompt>& classes) {
    require(!rows.empty(), "embedding file is empty");
    const std::size_t dim = rows.front().vector.size();
    Labeled out{Tensor({rows.size(), dim}), {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t c = classes.size();
        for (std::size_t j = 0; j < classes.size(); ++j) {
            if (classes[j].name == rows[i].label) c = j;
        }
        require(c < classes.size(), "embedding '" + rows[i].id + "' has label '" + rows[i].label +
                                        "' which is not a known class");
        std::copy(rows[i].vector.begin(), rows[i].vector.end(), out.features.data() + i * dim);
        out.labels.push_back(c);
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Spike-stream processing toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random draw (required by seeded commands)");
    app.add_option("--config", g.config, "Pipeline config JSON");
    app.add_option("--meta", g.meta, "Sidecar metadata for a .dat input");
    app.add_option("--out", g.out, "Output path");
    app.set_version_flag("--version", std::string(kToolkitVersion));

    // encode
    auto* encode = app.add_subcommand("encode", "Encode a video into a packed spike stream");
    double theta = 5.0, noise = 0.0;
    std::size_t upsample = 1, target_len = 0;
    std::string in_path, out_path;
    encode->add_option("--theta", theta, "Firing threshold")->capture_default_str();
    encode->add_option("--noise", noise, "Uniform noise amplitude")->capture_default_str();
    encode->add_option("--upsample", upsample, "Temporal upsampling factor")->capture_default_str();
    encode->add_option("--target-len", target_len, "Subsample to this many frames (0 keeps all)");
    encode->add_option("input", in_path, "Frame directory or raw video")->required();
    encode->add_option("output", out_path, "Output .dat (or use --out)");
    encode->callback([&] {
        const std::uint64_t seed = need_seed(g, "encode");
        const fs::path out = out_path.empty() ? fs::path(need_out(g, "encode")) : fs::path(out_path);
        const EncoderConfig enc{theta, noise};
        enc.validate();
        const SpikeStream s = encode_input(in_path, enc, upsample, target_len, seed);
        save_stream(s, StreamMeta::of(s, theta), out, provenance("encode", seed, {in_path}));
    });

    // decode
    auto* decode = app.add_subcommand("decode", "Unpack a spike stream into binary PGM frames");
    std::string dec_in;
    decode->add_option("input", dec_in, ".dat file")->required();
    decode->callback([&] {
        const auto [s, meta] = load_stream(g, dec_in);
        IntensityVideo v(s.t_len(), s.height(), s.width());
        for (std::size_t t = 0; t < s.t_len(); ++t) {
            const auto f = s.frame(t);
            for (std::size_t i = 0; i < f.size(); ++i) v.frame(t)[i] = f[i];
        }
        write_video_frames(v, need_out(g, "decode"));
    });

    // reconstruct
    auto* recon = app.add_subcommand("reconstruct", "TFI intensity reconstruction to PGM frames");
    std::optional<std::size_t> recon_t;
    std::size_t recon_stride = 1;
    TfiConfig tfi;
    std::string recon_in;
    auto* opt_t = recon->add_option("--t", recon_t, "Single time step");
    recon->add_option("--stride", recon_stride, "Reconstruct every stride-th step")->excludes(opt_t);
    recon->add_option("--dtmax", tfi.delta_t_max, "Search half-window")->capture_default_str();
    recon->add_option("--default", tfi.default_value, "Value where no interval is found");
    recon->add_option("input", recon_in, ".dat file")->required();
    recon->callback([&] {
        const auto [s, meta] = load_stream(g, recon_in);
        tfi.theta = meta.threshold_theta;
        const fs::path out = need_out(g, "reconstruct");
        if (recon_t) {
            require(*recon_t < s.t_len(), "--t is beyond the stream length " + std::to_string(s.t_len()));
            fs::create_directories(out);
            write_pgm(out / "frame_00000.pgm", tfi_reconstruct(s, *recon_t, tfi), s.height(), s.width());
        } else {
            require(recon_stride >= 1, "--stride must be >= 1");
            write_video_frames(tfi_video(s, recon_stride, tfi), out);
        }
    });

    // slice
    auto* slice = app.add_subcommand("slice", "Cut a stream into overlapping clips");
    ClipWindowSpec window;
    std::string slice_in;
    slice->add_option("--window", window.window_len, "Clip length")->capture_default_str();
    slice->add_option("--stride", window.stride, "Clip stride")->capture_default_str();
    slice->add_option("input", slice_in, ".dat file")->required();
    slice->callback([&] {
        const auto [s, meta] = load_stream(g, slice_in);
        const fs::path out = need_out(g, "slice");
        fs::create_directories(out);
        const auto clips = slice_clips(s, window);
        for (std::size_t k = 0; k < clips.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof name, "clip_%04zu.dat", k);
            StreamMeta m = meta;
            m.t_len = clips[k].t_len();
            save_stream(clips[k], m, out / name, provenance("slice", std::nullopt, {slice_in}));
        }
        std::cout << clips.size() << " clips\n";
    });

    // subsample
    auto* sub = app.add_subcommand("subsample", "Uniform temporal subsampling");
    std::size_t sub_target = 250;
    std::string sub_in;
    sub->add_option("--target", sub_target, "Target length")->capture_default_str();
    sub->add_option("input", sub_in, ".dat file")->required();
    sub->callback([&] {
        const auto [s, meta] = load_stream(g, sub_in);
        const SpikeStream r = subsample_temporal(s, sub_target);
        StreamMeta m = meta;
        m.t_len = r.t_len();
        save_stream(r, m, need_out(g, "subsample"), provenance("subsample", std::nullopt, {sub_in}));
    });

    // init-weights
    auto* initw = app.add_subcommand("init-weights", "Write a seeded weight archive for featurize and snn-forward");
    initw->callback([&] {
        PipelineConfig cfg = config_of(g);
        cfg.weight_seed = need_seed(g, "init-weights");
        save_archive(init_pipeline_weights(cfg), need_out(g, "init-weights"));
    });

    // featurize
    auto* feat = app.add_subcommand("featurize", "HSFE and STAR-Net clip embeddings");
    std::string feat_weights, feat_label = "unknown";
    std::vector<std::string> feat_in;
    feat->add_option("--weights", feat_weights, "Weight archive directory")->required();
    feat->add_option("--label", feat_label, "Label stored with every embedding");
    feat->add_option("inputs", feat_in, ".dat files")->required();
    feat->callback([&] {
        const PipelineConfig cfg = config_of(g);
        const WeightSet w = load_archive(feat_weights);
        std::vector<LabeledEmbedding> rows;
        std::vector<fs::path> inputs;
        for (const auto& in : feat_in) {
            const auto [s, meta] = load_stream(g, in);
            rows.push_back({fs::path(in).stem().string(), feat_label, featurize_stream(s, cfg.hsfe(), cfg.star(), w)});
            inputs.emplace_back(in);
        }
        inputs.push_back(fs::path(feat_weights) / "manifest.json");
        const Provenance p = provenance("featurize", w.seed, inputs);
        write_embeddings(rows, need_out(g, "featurize"), &p);
    });

    // snn-forward
    auto* snn = app.add_subcommand("snn-forward", "Full-spiking encoder forward pass with an energy ledger");
    std::string snn_weights, snn_ledger, snn_in;
    std::size_t timesteps = 2;
    snn->add_option("--weights", snn_weights, "Weight archive directory")->required();
    snn->add_option("--timesteps", timesteps, "Time steps")->capture_default_str();
    snn->add_option("--ledger", snn_ledger, "Ledger output (defaults to --out)");
    snn->add_option("input", snn_in, ".dat file")->required();
    snn->callback([&] {
        PipelineConfig cfg = config_of(g);
        cfg.timesteps = timesteps;
        const WeightSet w = load_archive(snn_weights);
        const auto [s, meta] = load_stream(g, snn_in);
        const FsveResult r = fsve_forward(s, cfg.fsve(), w);
        const fs::path out = snn_ledger.empty() ? fs::path(need_out(g, "snn-forward")) : fs::path(snn_ledger);
        write_text(out, r.ledger.to_json() + "\n");
        write_provenance_sidecar(out, provenance("snn-forward", w.seed, {snn_in, fs::path(snn_weights) / "manifest.json"}));
        json summary = {{"embedding", r.embedding}, {"spike_tensors_checked", r.spike_tensors_checked}};
        std::cout << summary.dump() << "\n";
    });

    // energy
    auto* energy = app.add_subcommand("energy", "Energy estimates from ledgers");
    auto* report = energy->add_subcommand("report", "SNN vs dense ANN summary");
    energy->require_subcommand(1);
    std::string ledger_in, ann_in;
    report->add_option("ledger", ledger_in, "SNN ledger JSON")->required();
    report->add_option("--ann", ann_in, "Dense baseline ledger (defaults to the SNN ledger's max_sops)");
    report->callback([&] {
        const EnergyLedger snn_l = EnergyLedger::from_json(read_text(ledger_in));
        const EnergyLedger ann_l = ann_in.empty() ? snn_l : EnergyLedger::from_json(read_text(ann_in));
        const EnergyReport r = energy_report(snn_l, ann_l);
        std::cout << format_report(r);
        if (!g.out.empty()) {
            json sp = json::object();
            for (const auto& [name, v] : r.sparsity) sp[name] = v;
            write_text(g.out, json{{"e_snn_joules", r.e_snn}, {"e_ann_joules", r.e_ann},
                                   {"reduction_pct", r.reduction_pct}, {"sparsity", sp}}
                                      .dump(2) + "\n");
        }
    });

    // train-head
    auto* train = app.add_subcommand("train-head", "Few-shot fine-tuning of the alignment head");
    FinetuneOptions ft;
    std::string train_emb, train_prompts;
    train->add_option("--shots", ft.shots, "Support clips per class")->required();
    train->add_option("--lr", ft.lr, "Learning rate")->capture_default_str();
    train->add_option("--epochs", ft.epochs, "Epochs")->capture_default_str();
    train->add_option("embeddings", train_emb, "Support embeddings JSON")->required();
    train->add_option("prompts", train_prompts, "Class prompt file")->required();
    train->callback([&] {
        ft.seed = need_seed(g, "train-head");
        HeadArtifact a;
        a.classes = read_prompts(train_prompts);
        const Labeled support = label_rows(read_embeddings(train_emb), a.classes);
        const std::size_t out_dim = config_of(g).embed_dim;
        const auto r = finetune_head(support.features, support.labels, class_text_features(a.classes, a.embedder),
                                     init_head(support.features.dim(1), a.embedder.dim, out_dim, ft.seed), ft);
        a.head = r.head;
        a.loss_trace = r.loss_trace;
        const Provenance p = provenance("train-head", ft.seed, {train_emb, train_prompts});
        write_head(a, need_out(g, "train-head"), &p);
        std::printf("loss %.6f -> %.6f\n", r.loss_trace.front(), r.loss_trace.back());
    });

    // eval
    auto* eval = app.add_subcommand("eval", "Top-k accuracy of a head on labeled embeddings");
    std::string topk_text = "1";
    std::string eval_head, eval_emb;
    eval->add_option("--topk", topk_text, "Comma-separated k values")->capture_default_str();
    eval->add_option("head", eval_head, "Head JSON")->required();
    eval->add_option("embeddings", eval_emb, "Embeddings JSON")->required();
    eval->callback([&] {
        const HeadArtifact a = read_head(eval_head);
        const Labeled test = label_rows(read_embeddings(eval_emb), a.classes);
        const Tensor text = class_text_features(a.classes, a.embedder);
        json result = json::object();
        for (std::size_t k : parse_topk(topk_text)) {
            require(k <= a.classes.size(), "--topk " + std::to_string(k) + " exceeds the class count " +
                                               std::to_string(a.classes.size()));
            result["top" + std::to_string(k)] = head_topk(a.head, test.features, text, test.labels, k);
        }
        std::cout << result.dump() << "\n";
        if (!g.out.empty()) {
            Provenance p = provenance("eval", std::nullopt, {eval_head, eval_emb});
            result["provenance"] = {{"command", p.command}, {"toolkit_version", p.version}};
            json inputs = json::array();
            for (const auto& [path, hash] : p.inputs) inputs.push_back({{"path", path}, {"fnv1a64", hash}});
            result["provenance"]["inputs"] = inputs;
            write_text(g.out, result.dump(2) + "\n");
        }
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Render the synthetic action dataset");
    SyntheticDatasetSpec spec;
    std::vector<std::string> class_names;
    synth->add_option("--classes", class_names, "Subset of clap, wave, punch, throw");
    synth->add_option("--clips-per-class", spec.clips_per_class, "Clips per class")->capture_default_str();
    synth->add_option("--frames", spec.frames, "Frames per clip")->capture_default_str();
    synth->add_option("--resolution", spec.height, "Frame height and width")->capture_default_str();
    synth->callback([&] {
        spec.seed = need_seed(g, "synth");
        spec.width = spec.height;
        if (!class_names.empty()) {
            spec.classes.clear();
            for (const auto& n : class_names) spec.classes.push_back(motion_from_name(n));
        }
        const auto ds = synth_dataset(spec, need_out(g, "synth"));
        std::cout << ds.clips.size() << " clips, " << ds.prompts.size() << " classes\n";
    });

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Run synth, encode, featurize, snn and few-shot stages");
    pipe->callback([&] {
        require(!g.config.empty() || g.seed.has_value(), "pipeline requires --config or --seed");
        PipelineConfig cfg = config_of(g);
        if (g.seed) {
            cfg.data_seed = *g.seed;
            cfg.encode_seed = *g.seed;
            cfg.weight_seed = *g.seed;
        }
        if (!g.out.empty()) cfg.out_dir = g.out;
        const PipelineResult r = run_pipeline(cfg);
        for (std::size_t i = 0; i < r.mean_top1.size(); ++i) {
            std::printf("shots %zu: mean top-1 %.4f\n", cfg.shots[i], r.mean_top1[i]);
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const InvariantError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}
