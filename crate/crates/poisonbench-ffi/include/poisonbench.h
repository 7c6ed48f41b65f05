/* C interface to the poisonbench laboratory. Generated by cbindgen. */

#ifndef POISONBENCH_H
#define POISONBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum PbStatus {
  PbStatus_Ok = 0,
  PbStatus_NullPointer = 1,
  PbStatus_InvalidArgument = 2,
  PbStatus_ValidationError = 3,
  PbStatus_IoError = 4,
  PbStatus_RuntimeError = 5,
} PbStatus;

/**
 * Opaque embedding-matrix handle.
 */
typedef struct PbEmbedding PbEmbedding;

/**
 * Opaque text-attributed graph handle.
 */
typedef struct PbGraph PbGraph;

/**
 * Opaque trained-victim handle (model plus its training split seed).
 */
typedef struct PbModel PbModel;

/**
 * Opaque perturbation-set handle.
 */
typedef struct PbPerturbation PbPerturbation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the message of the most recent error on this thread, or null.
 * The caller owns the string and must free it with `pb_string_free`.
 */
char *pb_last_error_message(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library and not yet
 * freed.
 */
void pb_string_free(char *s);

/**
 * Generates a synthetic block-model graph.
 *
 * # Safety
 * `out` must point to writable memory for one pointer.
 */
enum PbStatus pb_graph_generate_sbm(uintptr_t num_nodes,
                                    uintptr_t num_classes,
                                    double intra_edge_prob,
                                    double inter_edge_prob,
                                    uintptr_t vocab_size,
                                    uintptr_t words_per_node,
                                    double class_word_skew,
                                    uint64_t seed,
                                    struct PbGraph **out);

/**
 * Loads a graph from a directory holding edges.tsv, texts.txt, labels.txt.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string; `out` must be writable.
 */
enum PbStatus pb_graph_load_dir(const char *dir, struct PbGraph **out);

/**
 * Saves a graph into a directory (three files plus manifest).
 *
 * # Safety
 * `graph` must be a live handle; `dir` a valid string.
 */
enum PbStatus pb_graph_save_dir(const struct PbGraph *graph, const char *dir);

/**
 * # Safety
 * `graph` must be a live handle or null (ignored).
 */
void pb_graph_free(struct PbGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle.
 */
uintptr_t pb_graph_num_nodes(const struct PbGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle.
 */
uintptr_t pb_graph_num_edges(const struct PbGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle.
 */
uintptr_t pb_graph_num_classes(const struct PbGraph *graph);

/**
 * Edge homophily of the graph's own labels, in percent.
 *
 * # Safety
 * `graph` must be a live handle; `out` writable.
 */
enum PbStatus pb_graph_edge_homophily(const struct PbGraph *graph, double *out);

/**
 * Builds a bag-of-words (`tfidf = false`) or TF-IDF (`tfidf = true`)
 * embedding from the graph's texts.
 *
 * # Safety
 * `graph` must be a live handle; `out` writable.
 */
enum PbStatus pb_embedding_from_texts(const struct PbGraph *graph,
                                      uintptr_t max_vocab,
                                      uintptr_t min_df,
                                      bool tfidf,
                                      struct PbEmbedding **out);

/**
 * Loads an external embedding file, validating the row count against the
 * graph.
 *
 * # Safety
 * `graph` must be a live handle; `path` a valid string; `out` writable.
 */
enum PbStatus pb_embedding_load(const struct PbGraph *graph,
                                const char *path,
                                struct PbEmbedding **out);

/**
 * # Safety
 * `emb` must be a live handle or null (ignored).
 */
void pb_embedding_free(struct PbEmbedding *emb);

/**
 * # Safety
 * `emb` must be a live handle.
 */
uintptr_t pb_embedding_rows(const struct PbEmbedding *emb);

/**
 * # Safety
 * `emb` must be a live handle.
 */
uintptr_t pb_embedding_dim(const struct PbEmbedding *emb);

/**
 * Runs the label-guided flip attack at a global rate. With
 * `oracle_labels = false` the gray-box label view (true labels on the seeded
 * train/val split, surrogate predictions elsewhere) is used.
 *
 * # Safety
 * `graph` and `emb` must be live handles; `out` writable.
 */
enum PbStatus pb_attack_dice(const struct PbGraph *graph,
                             const struct PbEmbedding *emb,
                             double rate,
                             uint64_t seed,
                             double train_frac,
                             double val_frac,
                             uint64_t split_seed,
                             bool oracle_labels,
                             struct PbPerturbation **out);

/**
 * Uniform random flip baseline at a global rate.
 *
 * # Safety
 * `graph` must be a live handle; `out` writable.
 */
enum PbStatus pb_attack_random_flip(const struct PbGraph *graph,
                                    double rate,
                                    uint64_t seed,
                                    struct PbPerturbation **out);

/**
 * # Safety
 * `pset` must be a live handle or null (ignored).
 */
void pb_perturbation_free(struct PbPerturbation *pset);

/**
 * # Safety
 * `pset` must be a live handle.
 */
uintptr_t pb_perturbation_num_flips(const struct PbPerturbation *pset);

/**
 * Content hash of the perturbation set (caller frees with
 * `pb_string_free`).
 *
 * # Safety
 * `pset` must be a live handle.
 */
char *pb_perturbation_content_hash(const struct PbPerturbation *pset);

/**
 * Writes the perturbation set as JSON (caller frees the path string rules
 * do not apply; this writes a file).
 *
 * # Safety
 * `pset` must be a live handle; `path` a valid string.
 */
enum PbStatus pb_perturbation_save_json(const struct PbPerturbation *pset, const char *path);

/**
 * Applies a perturbation set, producing a new graph handle.
 *
 * # Safety
 * `graph` and `pset` must be live handles; `out` writable.
 */
enum PbStatus pb_apply_perturbation(const struct PbGraph *graph,
                                    const struct PbPerturbation *pset,
                                    struct PbGraph **out);

/**
 * Removes the `quantile` lowest-similarity fraction of edges, producing a
 * new graph handle.
 *
 * # Safety
 * `graph` and `emb` must be live handles; `out` writable.
 */
enum PbStatus pb_purify_quantile(const struct PbGraph *graph,
                                 const struct PbEmbedding *emb,
                                 double quantile,
                                 struct PbGraph **out);

/**
 * Trains a victim (kind: 0 = GCN, 1 = GAT, 2 = SAGE) on a seeded split and
 * returns the handle.
 *
 * # Safety
 * `graph` and `emb` must be live handles; `out` writable.
 */
enum PbStatus pb_train_victim(const struct PbGraph *graph,
                              const struct PbEmbedding *emb,
                              uint32_t kind,
                              uintptr_t hidden,
                              uintptr_t epochs,
                              double train_frac,
                              double val_frac,
                              uint64_t split_seed,
                              uint64_t train_seed,
                              struct PbModel **out);

/**
 * # Safety
 * `model` must be a live handle or null (ignored).
 */
void pb_model_free(struct PbModel *model);

/**
 * Test-split accuracy of the model on the given graph and features, as a
 * fraction in [0, 1]. The split is re-derived from the seed stored in the
 * model handle.
 *
 * # Safety
 * All handles must be live; `out` writable.
 */
enum PbStatus pb_model_test_accuracy(const struct PbModel *model,
                                     const struct PbGraph *graph,
                                     const struct PbEmbedding *emb,
                                     double *out);

/**
 * Relative drop in accuracy, percentages in and out.
 *
 * # Safety
 * `out` must be writable.
 */
enum PbStatus pb_metric_rda(double acc_clean, double acc_attack, double *out);

/**
 * One-sided Clopper-Pearson lower confidence bound.
 *
 * # Safety
 * `out` must be writable.
 */
enum PbStatus pb_clopper_pearson_lower(uintptr_t successes,
                                       uintptr_t trials,
                                       double alpha,
                                       double *out);

/**
 * Certified edge-deletion radius for a smoothed-probability lower bound.
 */
uintptr_t pb_certified_radius(double p_lower, double p_del);

/**
 * Default smoothing parameters (p_del 0.4, 10000 samples, alpha 0.05).
 */
double pb_smoothing_default_p_del(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POISONBENCH_H */
