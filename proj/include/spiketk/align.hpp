#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spiketk/provenance.hpp"
#include "spiketk/tensor.hpp"

namespace spiketk {

enum class Modality { video, text };

/// B×D rows of one modality with optional class ids.
struct EmbeddingBatch {
    Tensor rows;  // [B, D]
    Modality modality = Modality::video;
    std::vector<std::size_t> labels;  // empty or B entries

    void validate(std::size_t expected_dim) const;
    std::size_t size() const { return rows.dim(0); }
};

/// Inverse temperature stored as its logarithm and clamped from above.
struct Temperature {
    double log_inv_tau = 2.659739;  // log(14.29)
    double clamp_max = 100.0;

    void validate() const;
    double inv_tau() const;
    /// True when the clamp is active, so d(inv_tau)/d(log_inv_tau) = 0.
    bool clamped() const;

    friend bool operator==(const Temperature&, const Temperature&) = default;
};

/// Trainable final layers: one affine projection per modality plus the
/// temperature. Similarities are cosines of the projected vectors.
struct AlignmentHead {
    Tensor video_w;  // [D, D_video]
    std::vector<double> video_b;
    Tensor text_w;  // [D, D_text]
    std::vector<double> text_b;
    Temperature temperature;

    std::size_t out_dim() const { return video_w.dim(0); }
    std::size_t video_dim() const { return video_w.dim(1); }
    std::size_t text_dim() const { return text_w.dim(1); }
    void validate() const;

    friend bool operator==(const AlignmentHead&, const AlignmentHead&) = default;
};

/// Identity (padded to shape) plus seeded uniform noise of the given amplitude.
AlignmentHead init_head(std::size_t video_dim, std::size_t text_dim, std::size_t out_dim, std::uint64_t seed,
                        double noise = 0.01);

/// Hashed bag-of-tokens text features.
struct TextEmbedder {
    std::uint64_t seed = 0x5eed;
    std::size_t table_size = 4096;
    std::size_t dim = 64;

    void validate() const;
    /// Seeded pseudo-random unit vector for table row `index`.
    std::vector<double> table_row(std::size_t index) const;
    /// Lowercased, whitespace-split tokens.
    static std::vector<std::string> tokenize(std::string_view text);
    /// Mean of the table rows of the tokens' FNV-1a 64 hashes.
    std::vector<double> features(std::string_view text) const;
};

/// Text features passed through the head's text projection.
std::vector<double> embed_text(std::string_view text, const TextEmbedder& embedder, const AlignmentHead& head);

double cosine_similarity(std::span<const double> v, std::span<const double> t);

/// Projects rows through (w, b) and scales each result to unit length.
Tensor project_normalized(const Tensor& x, const Tensor& w, std::span<const double> b);

/// Symmetric InfoNCE on logits S/τ: the mean over pairs of the row-softmax
/// and column-softmax negative log-likelihoods of the diagonal, summed.
double contrastive_loss_from_similarity(const Tensor& similarity, double inv_tau);
double contrastive_loss(const EmbeddingBatch& video, const EmbeddingBatch& text, const Temperature& temp);

struct HeadGradient {
    Tensor video_w;
    std::vector<double> video_b;
    Tensor text_w;
    std::vector<double> text_b;
    double log_inv_tau = 0.0;
};

/// Loss of the head on raw features (row i of video pairs with row i of text).
double head_loss(const Tensor& video_feat, const Tensor& text_feat, const AlignmentHead& head);
/// Exact gradient of head_loss with respect to every head parameter.
HeadGradient head_gradient(const Tensor& video_feat, const Tensor& text_feat, const AlignmentHead& head,
                           double* loss = nullptr);

struct FinetuneOptions {
    std::size_t shots = 8;
    std::size_t epochs = 200;
    double lr = 0.05;
    std::uint64_t seed = 0;
};

struct FinetuneResult {
    AlignmentHead head;
    /// Entry 0 is the support loss before training; entry e the loss after epoch e.
    std::vector<double> loss_trace;
};

/// Gradient descent on the support set. `features` rows carry class ids in
/// [0, class_text.dim(0)); the first `shots` rows of each class are used.
/// Each batch holds one shot of every class; shot order within classes and
/// batch order are reshuffled every epoch from `seed`.
FinetuneResult finetune_head(const Tensor& features, const std::vector<std::size_t>& labels,
                             const Tensor& class_text, const AlignmentHead& init, const FinetuneOptions& opts);

/// Fraction of rows whose label is among the k classes of highest cosine
/// similarity; ties go to the lower class index.
double evaluate_topk(const Tensor& video_embs, const Tensor& class_text_embs, const std::vector<std::size_t>& labels,
                     std::size_t k);

/// Projects both sides through the head, then evaluate_topk.
double head_topk(const AlignmentHead& head, const Tensor& video_feat, const Tensor& class_text_feat,
                 const std::vector<std::size_t>& labels, std::size_t k);

struct LabeledEmbedding {
    std::string id;
    std::string label;
    std::vector<double> vector;
};

/// JSON array of {id, label, vector}; the provenance goes to a sibling
/// `<stem>.provenance.json` when given.
void write_embeddings(const std::vector<LabeledEmbedding>& rows, const std::filesystem::path& path,
                      const Provenance* provenance = nullptr);
std::vector<LabeledEmbedding> read_embeddings(const std::filesystem::path& path);

/// `<stem>.provenance.json` next to an array-valued artifact.
std::filesystem::path provenance_sidecar(const std::filesystem::path& path);
void write_provenance_sidecar(const std::filesystem::path& artifact, const Provenance& provenance);

struct ClassPrompt {
    std::string name;
    std::string prompt;
};

/// Lines of the form `name: prompt text`; blank lines are skipped.
std::vector<ClassPrompt> read_prompts(const std::filesystem::path& path);
void write_prompts(const std::vector<ClassPrompt>& prompts, const std::filesystem::path& path);

/// A trained head with everything needed to classify: the classes, their
/// prompts and the text embedder.
struct HeadArtifact {
    AlignmentHead head;
    TextEmbedder embedder;
    std::vector<ClassPrompt> classes;
    std::vector<double> loss_trace;
};

void write_head(const HeadArtifact& artifact, const std::filesystem::path& path,
                const Provenance* provenance = nullptr);
HeadArtifact read_head(const std::filesystem::path& path);

/// Row-stacks the text features of each class prompt.
Tensor class_text_features(const std::vector<ClassPrompt>& classes, const TextEmbedder& embedder);

}  // namespace spiketk
