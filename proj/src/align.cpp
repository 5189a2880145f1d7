#include "spiketk/align.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json_util.hpp"
#include "spiketk/error.hpp"
#include "spiketk/hash.hpp"

namespace spiketk {

namespace {

using detail::json;

void require_finite(std::span<const double> v, const std::string& what) {
    for (double x : v) require(std::isfinite(x), what + " contains a non-finite value");
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Tensor cosine_matrix(const Tensor& u, const Tensor& w) {
    const std::size_t b = u.dim(0), c = w.dim(0), d = u.dim(1);
    Tensor s({b, c});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += u.at(i, k) * w.at(j, k);
            s.at(i, j) = dot;
        }
    }
    return s;
}

Tensor unit_rows(const Tensor& x) {
    Tensor out = x;
    const std::size_t d = x.dim(1);
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        const double n = norm(x.values().subspan(i * d, d));
        require(n > 0.0, "zero vector cannot be normalized");
        for (std::size_t k = 0; k < d; ++k) out.at(i, k) /= n;
    }
    return out;
}

// Backprop of dL/du through u = z/‖z‖ and z = W·x + b, accumulating into dW, db.
void backprop_projection(const Tensor& x, const Tensor& z, const Tensor& du, Tensor& dw, std::vector<double>& db) {
    const std::size_t n = x.dim(0), d_in = x.dim(1), d = z.dim(1);
    std::vector<double> dz(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double zn = norm(z.values().subspan(i * d, d));
        double u_du = 0.0;
        for (std::size_t k = 0; k < d; ++k) u_du += z.at(i, k) / zn * du.at(i, k);
        for (std::size_t k = 0; k < d; ++k) dz[k] = (du.at(i, k) - z.at(i, k) / zn * u_du) / zn;
        for (std::size_t k = 0; k < d; ++k) {
            db[k] += dz[k];
            for (std::size_t m = 0; m < d_in; ++m) dw.at(k, m) += dz[k] * x.at(i, m);
        }
    }
}

json tensor_rows(const Tensor& t) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        const auto r = t.values().subspan(i * t.dim(1), t.dim(1));
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

Tensor rows_tensor(const json& rows, const std::string& where) {
    require(rows.is_array() && !rows.empty(), where + ": expected a non-empty matrix");
    const std::size_t cols = rows.front().size();
    Tensor t({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].is_array() && rows[i].size() == cols, where + ": ragged matrix");
        for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = rows[i][j].get<double>();
    }
    return t;
}

}  // namespace

void EmbeddingBatch::validate(std::size_t expected_dim) const {
    require(rows.rank() == 2 && rows.dim(0) >= 1, "embedding batch needs at least one row");
    require(rows.dim(1) == expected_dim, "embedding dim " + std::to_string(rows.dim(1)) + " != expected " +
                                             std::to_string(expected_dim));
    require_finite(rows.values(), "embedding batch");
    require(labels.empty() || labels.size() == rows.dim(0), "embedding labels do not match the row count");
}

void Temperature::validate() const {
    require(std::isfinite(log_inv_tau), "log inverse temperature must be finite");
    require(clamp_max > 0.0, "temperature clamp must be positive");
}

double Temperature::inv_tau() const { return std::min(std::exp(log_inv_tau), clamp_max); }

bool Temperature::clamped() const { return std::exp(log_inv_tau) >= clamp_max; }

void AlignmentHead::validate() const {
    require(video_w.rank() == 2 && text_w.rank() == 2, "head projections must be matrices");
    require(video_w.dim(0) == text_w.dim(0), "head projections disagree on the output dim");
    require(video_b.size() == video_w.dim(0) && text_b.size() == text_w.dim(0), "head bias length mismatch");
    require_finite(video_w.values(), "video projection");
    require_finite(text_w.values(), "text projection");
    require_finite(video_b, "video bias");
    require_finite(text_b, "text bias");
    temperature.validate();
}

AlignmentHead init_head(std::size_t video_dim, std::size_t text_dim, std::size_t out_dim, std::uint64_t seed,
                        double noise) {
    require(video_dim >= 1 && text_dim >= 1 && out_dim >= 1, "head dims must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-noise, noise);
    const auto make = [&](std::size_t in) {
        Tensor w({out_dim, in});
        for (std::size_t i = 0; i < out_dim; ++i) {
            for (std::size_t j = 0; j < in; ++j) w.at(i, j) = (i == j ? 1.0 : 0.0) + (noise > 0.0 ? dist(rng) : 0.0);
        }
        return w;
    };
    AlignmentHead head;
    head.video_w = make(video_dim);
    head.video_b.assign(out_dim, 0.0);
    head.text_w = make(text_dim);
    head.text_b.assign(out_dim, 0.0);
    return head;
}

void TextEmbedder::validate() const {
    require(table_size >= 1 && dim >= 1, "text embedder table must be non-empty");
}

std::vector<double> TextEmbedder::table_row(std::size_t index) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(dim);
    double n = 0.0;
    while (n == 0.0) {
        for (double& x : v) x = dist(rng);
        n = norm(v);
    }
    for (double& x : v) x /= n;
    return v;
}

std::vector<std::string> TextEmbedder::tokenize(std::string_view text) {
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::istringstream in(lowered);
    std::vector<std::string> tokens;
    for (std::string tok; in >> tok;) tokens.push_back(tok);
    return tokens;
}

std::vector<double> TextEmbedder::features(std::string_view text) const {
    validate();
    const auto tokens = tokenize(text);
    require(!tokens.empty(), "cannot embed empty text");
    std::vector<std::size_t> rows;
    for (const auto& tok : tokens) rows.push_back(fnv1a64(tok) % table_size);
    // Summation order must not depend on token order.
    std::sort(rows.begin(), rows.end());
    std::vector<double> sum(dim, 0.0);
    for (std::size_t r : rows) {
        const auto v = table_row(r);
        for (std::size_t k = 0; k < dim; ++k) sum[k] += v[k];
    }
    for (double& x : sum) x /= static_cast<double>(rows.size());
    return sum;
}

std::vector<double> embed_text(std::string_view text, const TextEmbedder& embedder, const AlignmentHead& head) {
    const auto f = embedder.features(text);
    require(f.size() == head.text_dim(), "text feature dim does not match the head");
    const Tensor z = linear(Tensor({1, f.size()}, f), head.text_w, head.text_b);
    return {z.values().begin(), z.values().end()};
}

double cosine_similarity(std::span<const double> v, std::span<const double> t) {
    require(v.size() == t.size(), "cosine similarity of vectors with different lengths");
    const double nv = norm(v), nt = norm(t);
    require(nv > 0.0 && nt > 0.0, "cosine similarity of a zero vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * t[i];
    return std::clamp(dot / (nv * nt), -1.0, 1.0);
}

Tensor project_normalized(const Tensor& x, const Tensor& w, std::span<const double> b) {
    return unit_rows(linear(x, w, b));
}

double contrastive_loss_from_similarity(const Tensor& similarity, double inv_tau) {
    require(similarity.rank() == 2 && similarity.dim(0) == similarity.dim(1) && similarity.dim(0) >= 1,
            "similarity matrix must be square and non-empty");
    const std::size_t b = similarity.dim(0);
    double total = 0.0;
    std::vector<double> row(b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) row[j] = inv_tau * similarity.at(i, j);
        double mx = *std::max_element(row.begin(), row.end());
        double lse = 0.0;
        for (double v : row) lse += std::exp(v - mx);
        total += mx + std::log(lse) - row[i];

        for (std::size_t j = 0; j < b; ++j) row[j] = inv_tau * similarity.at(j, i);
        mx = *std::max_element(row.begin(), row.end());
        lse = 0.0;
        for (double v : row) lse += std::exp(v - mx);
        total += mx + std::log(lse) - row[i];
    }
    return total / static_cast<double>(b);
}

double contrastive_loss(const EmbeddingBatch& video, const EmbeddingBatch& text, const Temperature& temp) {
    require(video.rows.rank() == 2 && text.rows.rank() == 2, "embedding batches must be matrices");
    require(video.size() == text.size(), "video batch has " + std::to_string(video.size()) + " rows, text batch " +
                                             std::to_string(text.size()));
    video.validate(video.rows.dim(1));
    text.validate(video.rows.dim(1));
    temp.validate();
    return contrastive_loss_from_similarity(cosine_matrix(unit_rows(video.rows), unit_rows(text.rows)),
                                            temp.inv_tau());
}

double head_loss(const Tensor& video_feat, const Tensor& text_feat, const AlignmentHead& head) {
    require(video_feat.dim(0) == text_feat.dim(0), "video and text feature batches differ in size");
    const Tensor u = project_normalized(video_feat, head.video_w, head.video_b);
    const Tensor w = project_normalized(text_feat, head.text_w, head.text_b);
    return contrastive_loss_from_similarity(cosine_matrix(u, w), head.temperature.inv_tau());
}

HeadGradient head_gradient(const Tensor& video_feat, const Tensor& text_feat, const AlignmentHead& head,
                           double* loss) {
    head.validate();
    require(video_feat.rank() == 2 && text_feat.rank() == 2, "features must be matrices");
    require(video_feat.dim(0) == text_feat.dim(0), "video and text feature batches differ in size");
    require(video_feat.dim(1) == head.video_dim() && text_feat.dim(1) == head.text_dim(),
            "feature dims do not match the head");
    const std::size_t b = video_feat.dim(0), d = head.out_dim();
    const Tensor zv = linear(video_feat, head.video_w, head.video_b);
    const Tensor zt = linear(text_feat, head.text_w, head.text_b);
    const Tensor u = unit_rows(zv);
    const Tensor w = unit_rows(zt);
    const Tensor sim = cosine_matrix(u, w);
    const double s = head.temperature.inv_tau();
    if (loss) *loss = contrastive_loss_from_similarity(sim, s);

    // dL/dlogits = ((P_row − I) + (P_col − I)) / B
    Tensor g({b, b});
    std::vector<double> row(b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) row[j] = s * sim.at(i, j);
        softmax_inplace(row);
        for (std::size_t j = 0; j < b; ++j) g.at(i, j) += row[j] - (i == j ? 1.0 : 0.0);
    }
    for (std::size_t j = 0; j < b; ++j) {
        for (std::size_t i = 0; i < b; ++i) row[i] = s * sim.at(i, j);
        softmax_inplace(row);
        for (std::size_t i = 0; i < b; ++i) g.at(i, j) += row[i] - (i == j ? 1.0 : 0.0);
    }
    for (double& v : g.values()) v /= static_cast<double>(b);

    HeadGradient grad;
    double ds = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) ds += g[i] * sim[i];
    grad.log_inv_tau = head.temperature.clamped() ? 0.0 : s * ds;

    Tensor du({b, d}), dw({b, d});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            const double dsim = s * g.at(i, j);
            for (std::size_t k = 0; k < d; ++k) {
                du.at(i, k) += dsim * w.at(j, k);
                dw.at(j, k) += dsim * u.at(i, k);
            }
        }
    }
    grad.video_w = Tensor(head.video_w.shape());
    grad.video_b.assign(d, 0.0);
    grad.text_w = Tensor(head.text_w.shape());
    grad.text_b.assign(d, 0.0);
    backprop_projection(video_feat, zv, du, grad.video_w, grad.video_b);
    backprop_projection(text_feat, zt, dw, grad.text_w, grad.text_b);
    return grad;
}

FinetuneResult finetune_head(const Tensor& features, const std::vector<std::size_t>& labels,
                             const Tensor& class_text, const AlignmentHead& init, const FinetuneOptions& opts) {
    init.validate();
    require(opts.shots >= 1, "fine-tuning needs at least one shot per class");
    require(opts.lr > 0.0 && std::isfinite(opts.lr), "learning rate must be positive");
    require(features.rank() == 2 && labels.size() == features.dim(0), "support labels do not match the features");
    require(class_text.rank() == 2 && class_text.dim(0) >= 1, "need at least one class");
    const std::size_t classes = class_text.dim(0);

    std::vector<std::vector<std::size_t>> support(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] < classes, "support label " + std::to_string(labels[i]) + " out of range");
        if (support[labels[i]].size() < opts.shots) support[labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < classes; ++c) {
        require(support[c].size() == opts.shots, "class " + std::to_string(c) + " has " +
                                                     std::to_string(support[c].size()) + " support rows, need " +
                                                     std::to_string(opts.shots));
    }

    const std::size_t dv = features.dim(1);
    const auto batch_features = [&](const std::vector<std::vector<std::size_t>>& order, std::size_t shot) {
        Tensor x({classes, dv});
        for (std::size_t c = 0; c < classes; ++c) {
            const std::size_t r = order[c][shot];
            std::copy_n(features.data() + r * dv, dv, x.data() + c * dv);
        }
        return x;
    };
    const auto support_loss = [&](const AlignmentHead& h) {
        double total = 0.0;
        for (std::size_t shot = 0; shot < opts.shots; ++shot) total += head_loss(batch_features(support, shot), class_text, h);
        return total / static_cast<double>(opts.shots);
    };

    FinetuneResult result{init, {support_loss(init)}};
    AlignmentHead& h = result.head;
    std::mt19937_64 rng(opts.seed);
    auto order = support;
    std::vector<std::size_t> batches(opts.shots);
    for (std::size_t e = 0; e < opts.epochs; ++e) {
        for (auto& shots : order) std::shuffle(shots.begin(), shots.end(), rng);
        std::iota(batches.begin(), batches.end(), std::size_t{0});
        std::shuffle(batches.begin(), batches.end(), rng);
        for (std::size_t shot : batches) {
            const HeadGradient g = head_gradient(batch_features(order, shot), class_text, h);
            for (std::size_t i = 0; i < h.video_w.size(); ++i) h.video_w[i] -= opts.lr * g.video_w[i];
            for (std::size_t i = 0; i < h.text_w.size(); ++i) h.text_w[i] -= opts.lr * g.text_w[i];
            for (std::size_t i = 0; i < h.video_b.size(); ++i) h.video_b[i] -= opts.lr * g.video_b[i];
            for (std::size_t i = 0; i < h.text_b.size(); ++i) h.text_b[i] -= opts.lr * g.text_b[i];
            h.temperature.log_inv_tau -= opts.lr * g.log_inv_tau;
        }
        result.loss_trace.push_back(support_loss(h));
    }
    ensure(std::all_of(result.loss_trace.begin(), result.loss_trace.end(), [](double v) { return std::isfinite(v); }),
           "fine-tuning diverged");
    return result;
}

double evaluate_topk(const Tensor& video_embs, const Tensor& class_text_embs, const std::vector<std::size_t>& labels,
                     std::size_t k) {
    require(video_embs.rank() == 2 && class_text_embs.rank() == 2, "embeddings must be matrices");
    require(video_embs.dim(1) == class_text_embs.dim(1), "video and class embeddings differ in dim");
    const std::size_t classes = class_text_embs.dim(0);
    require(k >= 1 && k <= classes, "top-k needs 1 <= k <= class count (" + std::to_string(classes) + "), got " +
                                        std::to_string(k));
    require(labels.size() == video_embs.dim(0) && !labels.empty(), "one label per video embedding is required");
    const Tensor sim = cosine_matrix(unit_rows(video_embs), unit_rows(class_text_embs));
    std::size_t hits = 0;
    std::vector<std::size_t> rank(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] < classes, "label " + std::to_string(labels[i]) + " out of range");
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        std::stable_sort(rank.begin(), rank.end(),
                         [&](std::size_t a, std::size_t b) { return sim.at(i, a) > sim.at(i, b); });
        if (std::find(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(k), labels[i]) !=
            rank.begin() + static_cast<std::ptrdiff_t>(k)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double head_topk(const AlignmentHead& head, const Tensor& video_feat, const Tensor& class_text_feat,
                 const std::vector<std::size_t>& labels, std::size_t k) {
    return evaluate_topk(linear(video_feat, head.video_w, head.video_b),
                         linear(class_text_feat, head.text_w, head.text_b), labels, k);
}

std::filesystem::path provenance_sidecar(const std::filesystem::path& path) {
    auto out = path;
    out.replace_extension();
    out += ".provenance.json";
    return out;
}

void write_provenance_sidecar(const std::filesystem::path& artifact, const Provenance& provenance) {
    detail::write_json_file(detail::provenance_json(provenance), provenance_sidecar(artifact));
}

void write_embeddings(const std::vector<LabeledEmbedding>& rows, const std::filesystem::path& path,
                      const Provenance* provenance) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back({{"id", r.id}, {"label", r.label}, {"vector", r.vector}});
    detail::write_json_file(arr, path);
    if (provenance) write_provenance_sidecar(path, *provenance);
}

std::vector<LabeledEmbedding> read_embeddings(const std::filesystem::path& path) {
    const json doc = detail::read_json_file(path);
    require(doc.is_array(), path.string() + ": embeddings file must be a JSON array");
    std::vector<LabeledEmbedding> rows;
    for (const auto& item : doc) {
        const std::string where = path.string();
        rows.push_back({detail::field<std::string>(item, "id", where), detail::field<std::string>(item, "label", where),
                        detail::field<std::vector<double>>(item, "vector", where)});
        require(!rows.back().vector.empty(), where + ": empty vector for " + rows.back().id);
        require(rows.back().vector.size() == rows.front().vector.size(), where + ": vectors differ in length");
        require_finite(rows.back().vector, where);
    }
    return rows;
}

std::vector<ClassPrompt> read_prompts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<ClassPrompt> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        require(colon != std::string::npos, path.string() + ":" + std::to_string(n) + ": expected 'name: prompt'");
        const auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        ClassPrompt p{trim(line.substr(0, colon)), trim(line.substr(colon + 1))};
        require(!p.name.empty() && !p.prompt.empty(), path.string() + ":" + std::to_string(n) + ": empty class or prompt");
        for (const auto& q : out) {
            require(q.name != p.name && q.prompt != p.prompt, path.string() + ": duplicate class or prompt '" + p.name + "'");
        }
        out.push_back(std::move(p));
    }
    require(!out.empty(), path.string() + ": no classes");
    return out;
}

void write_prompts(const std::vector<ClassPrompt>& prompts, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& p : prompts) out << p.name << ": " << p.prompt << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

void write_head(const HeadArtifact& a, const std::filesystem::path& path, const Provenance* provenance) {
    a.head.validate();
    json classes = json::array();
    for (const auto& c : a.classes) classes.push_back({{"name", c.name}, {"prompt", c.prompt}});
    json doc = {
        {"video", {{"w", tensor_rows(a.head.video_w)}, {"b", a.head.video_b}}},
        {"text", {{"w", tensor_rows(a.head.text_w)}, {"b", a.head.text_b}}},
        {"log_inv_tau", a.head.temperature.log_inv_tau},
        {"clamp_max", a.head.temperature.clamp_max},
        {"text_embedder", {{"seed", a.embedder.seed}, {"table_size", a.embedder.table_size}, {"dim", a.embedder.dim}}},
        {"classes", classes},
        {"loss_trace", a.loss_trace},
    };
    if (provenance) doc["provenance"] = detail::provenance_json(*provenance);
    detail::write_json_file(doc, path);
}

HeadArtifact read_head(const std::filesystem::path& path) {
    const json doc = detail::read_json_file(path);
    const std::string where = path.string();
    HeadArtifact a;
    try {
        a.head.video_w = rows_tensor(doc.at("video").at("w"), where + " video.w");
        a.head.video_b = doc.at("video").at("b").get<std::vector<double>>();
        a.head.text_w = rows_tensor(doc.at("text").at("w"), where + " text.w");
        a.head.text_b = doc.at("text").at("b").get<std::vector<double>>();
        a.head.temperature.log_inv_tau = doc.at("log_inv_tau").get<double>();
        a.head.temperature.clamp_max = doc.at("clamp_max").get<double>();
        const json& te = doc.at("text_embedder");
        a.embedder.seed = te.at("seed").get<std::uint64_t>();
        a.embedder.table_size = te.at("table_size").get<std::size_t>();
        a.embedder.dim = te.at("dim").get<std::size_t>();
        for (const auto& c : doc.at("classes")) {
            a.classes.push_back({c.at("name").get<std::string>(), c.at("prompt").get<std::string>()});
        }
        if (doc.contains("loss_trace")) a.loss_trace = doc.at("loss_trace").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw PreconditionError(where + ": malformed head file: " + e.what());
    }
    a.head.validate();
    require(!a.classes.empty(), where + ": head lists no classes");
    require(a.head.text_dim() == a.embedder.dim, where + ": text projection does not match the embedder dim");
    return a;
}

Tensor class_text_features(const std::vector<ClassPrompt>& classes, const TextEmbedder& embedder) {
    require(!classes.empty(), "need at least one class prompt");
    Tensor t({classes.size(), embedder.dim});
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto f = embedder.features(classes[c].prompt);
        std::copy(f.begin(), f.end(), t.data() + c * embedder.dim);
    }
    return t;
}

}  // namespace spiketk
