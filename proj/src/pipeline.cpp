#include "spiketk/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json_util.hpp"
#include "spiketk/align.hpp"
#include "spiketk/energy_meter.hpp"
#include "spiketk/error.hpp"
#include "spiketk/hash.hpp"
#include "spiketk/image_io.hpp"
#include "spiketk/synth.hpp"

namespace spiketk {

namespace {

using detail::json;
namespace fs = std::filesystem;

const std::vector<std::string> kStageOrder{"synth", "encode", "featurize", "snn", "fewshot"};

json config_json(const PipelineConfig& c) {
    return {{"out_dir", c.out_dir.string()},
            {"stages", c.stages},
            {"data_seed", c.data_seed},
            {"encode_seed", c.encode_seed},
            {"weight_seed", c.weight_seed},
            {"fewshot_seeds", c.fewshot_seeds},
            {"classes", c.classes},
            {"clips_per_class", c.clips_per_class},
            {"test_per_class", c.test_per_class},
            {"frames", c.frames},
            {"resolution", c.resolution},
            {"theta", c.theta},
            {"noise", c.noise},
            {"upsample", c.upsample},
            {"target_len", c.target_len},
            {"r_win", c.r_win},
            {"step", c.step},
            {"n_blocks", c.n_blocks},
            {"channel_step", c.channel_step},
            {"m", c.m},
            {"c_out", c.c_out},
            {"embed_dim", c.embed_dim},
            {"timesteps", c.timesteps},
            {"shots", c.shots},
            {"lr", c.lr},
            {"epochs", c.epochs},
            {"topk", c.topk}};
}

// Relative path inside the run directory, so artifacts do not depend on where the run lives.
std::string rel(const fs::path& p, const fs::path& root) { return fs::relative(p, root).generic_string(); }

Provenance run_provenance(const std::string& command, std::optional<std::uint64_t> seed,
                          const std::vector<fs::path>& inputs, const fs::path& root) {
    Provenance p;
    p.command = command;
    p.seed = seed;
    for (const auto& in : inputs) p.inputs.emplace_back(rel(in, root), file_fingerprint(in));
    return p;
}

// Fingerprint of the sorted file names and their contents.
std::string directory_fingerprint(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string digest;
    for (const auto& f : files) digest += f.filename().string() + "=" + file_fingerprint(f) + ";";
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(digest)));
    return hex;
}

void require_input(const fs::path& p, const std::string& stage, const std::string& producer) {
    require(fs::exists(p), "stage '" + stage + "' needs " + p.string() + "; run the '" + producer + "' stage first");
}

std::vector<Motion> first_classes(std::size_t n) {
    const std::vector<Motion> all{Motion::clap, Motion::wave, Motion::punch, Motion::throw_};
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

void PipelineConfig::validate() const {
    require(!out_dir.empty(), "pipeline needs an output directory");
    for (const auto& s : stages) {
        require(std::find(kStageOrder.begin(), kStageOrder.end(), s) != kStageOrder.end(),
                "unknown pipeline stage '" + s + "'");
    }
    require(classes >= 2 && classes <= 4, "pipeline supports 2 to 4 classes");
    require(test_per_class >= 1 && test_per_class < clips_per_class, "need test clips and a support pool per class");
    require(!shots.empty() && !fewshot_seeds.empty(), "few-shot sweep needs shots and seeds");
    for (std::size_t s : shots) {
        require(s >= 1 && s <= clips_per_class - test_per_class,
                "shots " + std::to_string(s) + " exceeds the support pool of " +
                    std::to_string(clips_per_class - test_per_class));
    }
    for (std::size_t k : topk) require(k >= 1 && k <= classes, "top-k must lie in [1, class count]");
    require(upsample >= 1, "upsample factor must be >= 1");
    require(lr > 0.0, "learning rate must be positive");
    hsfe().validate();
    star().validate();
    fsve().validate();
}

bool PipelineConfig::wants(const std::string& stage) const {
    return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

HsfeConfig PipelineConfig::hsfe() const {
    HsfeConfig h;
    h.blocks = {r_win, step, n_blocks};
    h.branches = m;
    h.channel_step = channel_step;
    h.c_out = c_out;
    return h;
}

MiniMapResNetConfig PipelineConfig::star() const {
    MiniMapResNetConfig s;
    s.in_channels = m * c_out;
    s.input_height = resolution;
    s.input_width = resolution;
    s.embed_dim = embed_dim;
    return s;
}

FsveConfig PipelineConfig::fsve() const {
    FsveConfig f;
    f.timesteps = timesteps;
    return f;
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw PreconditionError(std::string("malformed pipeline config: ") + e.what());
    }
    require(doc.is_object(), "pipeline config must be a JSON object");
    PipelineConfig c;
    json merged = config_json(c);
    for (const auto& [key, value] : doc.items()) {
        require(merged.contains(key), "unknown pipeline config key '" + key + "'");
        merged[key] = value;
    }
    try {
        c.out_dir = merged["out_dir"].get<std::string>();
        c.stages = merged["stages"].get<std::vector<std::string>>();
        c.data_seed = merged["data_seed"].get<std::uint64_t>();
        c.encode_seed = merged["encode_seed"].get<std::uint64_t>();
        c.weight_seed = merged["weight_seed"].get<std::uint64_t>();
        c.fewshot_seeds = merged["fewshot_seeds"].get<std::vector<std::uint64_t>>();
        c.classes = merged["classes"].get<std::size_t>();
        c.clips_per_class = merged["clips_per_class"].get<std::size_t>();
        c.test_per_class = merged["test_per_class"].get<std::size_t>();
        c.frames = merged["frames"].get<std::size_t>();
        c.resolution = merged["resolution"].get<std::size_t>();
        c.theta = merged["theta"].get<double>();
        c.noise = merged["noise"].get<double>();
        c.upsample = merged["upsample"].get<std::size_t>();
        c.target_len = merged["target_len"].get<std::size_t>();
        c.r_win = merged["r_win"].get<std::size_t>();
        c.step = merged["step"].get<std::size_t>();
        c.n_blocks = merged["n_blocks"].get<std::size_t>();
        c.channel_step = merged["channel_step"].get<std::size_t>();
        c.m = merged["m"].get<std::size_t>();
        c.c_out = merged["c_out"].get<std::size_t>();
        c.embed_dim = merged["embed_dim"].get<std::size_t>();
        c.timesteps = merged["timesteps"].get<std::size_t>();
        c.shots = merged["shots"].get<std::vector<std::size_t>>();
        c.lr = merged["lr"].get<double>();
        c.epochs = merged["epochs"].get<std::size_t>();
        c.topk = merged["topk"].get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw PreconditionError(std::string("bad pipeline config value: ") + e.what());
    }
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return pipeline_config_from_json(ss.str());
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) { return config_json(cfg).dump(2); }

SpikeStream encode_input(const fs::path& video_path, const EncoderConfig& enc, std::size_t upsample,
                         std::size_t target_len, std::uint64_t seed) {
    IntensityVideo video = read_video(video_path);
    video.validate();
    if (upsample > 1) video = upsample_temporal(video, upsample);
    SpikeStream s = encode_video(video, enc, seed);
    if (target_len > 0 && s.t_len() > target_len) s = subsample_temporal(s, target_len);
    return s;
}

std::vector<double> featurize_stream(const SpikeStream& stream, const HsfeConfig& hsfe,
                                     const MiniMapResNetConfig& star, const WeightSet& weights) {
    return star_net_forward(hsfe_forward(stream, hsfe, weights), star, weights);
}

WeightSet init_pipeline_weights(const PipelineConfig& cfg) {
    WeightSet w = init_hsfe_weights(cfg.hsfe(), cfg.weight_seed);
    merge_weights(w, init_star_net_weights(cfg.star(), cfg.weight_seed + 1));
    merge_weights(w, init_fsve_weights(cfg.fsve(), cfg.weight_seed + 2));
    w.seed = cfg.weight_seed;
    return w;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    const fs::path root = cfg.out_dir;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    const fs::path data_dir = root / "dataset";
    const fs::path spike_dir = root / "spikes";
    const fs::path weight_dir = root / "weights";
    PipelineResult result{root / "metrics.json", root / "embeddings.json", root / "ledger.json", {}};

    if (cfg.wants("synth")) {
        SyntheticDatasetSpec spec;
        spec.classes = first_classes(cfg.classes);
        spec.clips_per_class = cfg.clips_per_class;
        spec.frames = cfg.frames;
        spec.height = cfg.resolution;
        spec.width = cfg.resolution;
        spec.seed = cfg.data_seed;
        synth_dataset(spec, data_dir);
    }

    const bool needs_clips = cfg.wants("encode") || cfg.wants("featurize") || cfg.wants("snn");
    SyntheticDataset ds;
    if (needs_clips || cfg.wants("fewshot")) {
        require_input(data_dir / "dataset.json", "encode", "synth");
        ds = read_dataset(data_dir);
    }
    const auto dat_path = [&](const SyntheticClip& c) { return spike_dir / (c.id + ".dat"); };

    if (cfg.wants("encode")) {
        fs::create_directories(spike_dir, ec);
        if (ec) throw IoError("cannot create " + spike_dir.string() + ": " + ec.message());
        const EncoderConfig enc{cfg.theta, cfg.noise};
        for (const auto& clip : ds.clips) {
            const std::uint64_t seed = cfg.encode_seed ^ fnv1a64(clip.id);
            const SpikeStream s = encode_input(clip.frames_dir, enc, cfg.upsample, cfg.target_len, seed);
            const StreamMeta meta = StreamMeta::of(s, cfg.theta);
            write_dat(s, meta, dat_path(clip));
            Provenance p = run_provenance("encode", seed, {}, root);
            p.inputs.emplace_back(rel(clip.frames_dir, root), directory_fingerprint(clip.frames_dir));
            write_meta(meta, sidecar_path(dat_path(clip)), &p);
        }
    }

    const auto load_stream = [&](const SyntheticClip& clip, const std::string& stage) {
        require_input(dat_path(clip), stage, "encode");
        return read_dat(dat_path(clip), read_meta(sidecar_path(dat_path(clip))));
    };

    if (cfg.wants("featurize") || cfg.wants("snn")) {
        save_archive(init_pipeline_weights(cfg), weight_dir);
    }
    const auto weights = [&](const std::string& stage) {
        require_input(weight_dir / "manifest.json", stage, "featurize");
        return load_archive(weight_dir);
    };

    if (cfg.wants("featurize")) {
        const WeightSet w = weights("featurize");
        std::vector<LabeledEmbedding> rows;
        std::vector<fs::path> inputs;
        for (const auto& clip : ds.clips) {
            rows.push_back({clip.id, clip.label, featurize_stream(load_stream(clip, "featurize"), cfg.hsfe(), cfg.star(), w)});
            inputs.push_back(dat_path(clip));
        }
        inputs.push_back(weight_dir / "manifest.json");
        const Provenance p = run_provenance("featurize", cfg.weight_seed, inputs, root);
        write_embeddings(rows, result.embeddings, &p);
    }

    if (cfg.wants("snn")) {
        const WeightSet w = weights("snn");
        EnergyLedger ledger;
        std::vector<fs::path> inputs;
        for (const auto& clip : ds.clips) {
            ledger.merge(fsve_forward(load_stream(clip, "snn"), cfg.fsve(), w).ledger);
            inputs.push_back(dat_path(clip));
        }
        std::ofstream out(result.ledger, std::ios::trunc);
        if (!out) throw IoError("cannot write " + result.ledger.string());
        out << ledger.to_json() << '\n';
        if (!out) throw IoError("write failed for " + result.ledger.string());
        write_provenance_sidecar(result.ledger, run_provenance("snn-forward", cfg.weight_seed, inputs, root));
    }

    if (cfg.wants("fewshot")) {
        require_input(result.embeddings, "fewshot", "featurize");
        const auto rows = read_embeddings(result.embeddings);
        std::map<std::string, std::size_t> class_index;
        for (std::size_t c = 0; c < ds.prompts.size(); ++c) class_index[ds.prompts[c].name] = c;

        // Per class: the first test_per_class clips are held out, the rest form the support pool.
        const std::size_t classes = ds.prompts.size();
        const std::size_t dim = rows.front().vector.size();
        std::vector<std::vector<std::size_t>> by_class(classes);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto it = class_index.find(rows[i].label);
            require(it != class_index.end(), "embedding label '" + rows[i].label + "' is not a prompt class");
            by_class[it->second].push_back(i);
        }
        std::vector<std::size_t> test_rows, test_labels;
        std::vector<std::vector<std::size_t>> pool(classes);
        for (std::size_t c = 0; c < classes; ++c) {
            require(by_class[c].size() == cfg.clips_per_class, "class '" + ds.prompts[c].name +
                                                                   "' does not have clips_per_class embeddings");
            for (std::size_t j = 0; j < by_class[c].size(); ++j) {
                if (j < cfg.test_per_class) {
                    test_rows.push_back(by_class[c][j]);
                    test_labels.push_back(c);
                } else {
                    pool[c].push_back(by_class[c][j]);
                }
            }
        }
        const auto gather = [&](const std::vector<std::size_t>& idx) {
            Tensor t({idx.size(), dim});
            for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(rows[idx[i]].vector.data(), dim, t.data() + i * dim);
            return t;
        };
        const Tensor test = gather(test_rows);
        const TextEmbedder embedder;
        const Tensor text = class_text_features(ds.prompts, embedder);

        json sweep = json::array();
        for (std::size_t shots : cfg.shots) {
            std::map<std::size_t, std::vector<double>> acc;
            std::vector<double> final_loss, initial_loss;
            for (std::uint64_t seed : cfg.fewshot_seeds) {
                std::mt19937_64 rng(seed);
                std::vector<std::size_t> support_rows, support_labels;
                for (std::size_t c = 0; c < classes; ++c) {
                    auto p = pool[c];
                    std::shuffle(p.begin(), p.end(), rng);
                    for (std::size_t s = 0; s < shots; ++s) {
                        support_rows.push_back(p[s]);
                        support_labels.push_back(c);
                    }
                }
                const FinetuneOptions opts{shots, cfg.epochs, cfg.lr, seed};
                const auto run = finetune_head(gather(support_rows), support_labels, text,
                                               init_head(dim, embedder.dim, cfg.embed_dim, seed), opts);
                for (std::size_t k : cfg.topk) acc[k].push_back(head_topk(run.head, test, text, test_labels, k));
                initial_loss.push_back(run.loss_trace.front());
                final_loss.push_back(run.loss_trace.back());
            }
            json entry = {{"shots", shots}, {"initial_loss", initial_loss}, {"final_loss", final_loss}};
            for (const auto& [k, v] : acc) {
                const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
                entry["top" + std::to_string(k)] = {{"per_seed", v}, {"mean", mean}};
                if (k == 1) result.mean_top1.push_back(mean);
            }
            sweep.push_back(entry);
        }

        json metrics = {{"classes", classes},
                        {"test_clips", test_rows.size()},
                        {"chance", 1.0 / static_cast<double>(classes)},
                        {"fewshot", sweep}};
        std::vector<fs::path> inputs{result.embeddings, data_dir / "prompts.txt"};
        if (fs::exists(result.ledger)) {
            std::ifstream in(result.ledger);
            std::stringstream ss;
            ss << in.rdbuf();
            const EnergyLedger ledger = EnergyLedger::from_json(ss.str());
            const double e_snn = estimate_snn_energy(ledger);
            const double e_ann = estimate_ann_energy(ledger);
            metrics["energy"] = {{"e_snn_joules", e_snn},
                                 {"e_ann_joules", e_ann},
                                 {"reduction_pct", reduction_percent(e_snn, e_ann)}};
            inputs.push_back(result.ledger);
        }
        metrics["config"] = config_json(cfg);
        metrics["config"].erase("out_dir");
        metrics["provenance"] = detail::provenance_json(run_provenance("pipeline", std::nullopt, inputs, root));
        detail::write_json_file(metrics, result.metrics);
    }
    return result;
}

}  // namespace spiketk
