/* C interface to the forge core library.
 *
 * Every function returns a forge_status. On failure the message is available
 * from forge_last_error() on the same thread until the next call. Strings
 * returned through char** out-parameters are heap-allocated and must be
 * released with forge_free(). Out-pointers are set to NULL on failure. */
#ifndef FORGE_FORGE_H
#define FORGE_FORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FORGE_API __declspec(dllexport)
#else
#define FORGE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum forge_status {
    FORGE_OK = 0,
    FORGE_E_INVALID = 1,
    FORGE_E_IO = 2,
    FORGE_E_DIVERGENCE = 3,
    FORGE_E_UNKNOWN_TOKEN = 4,
    FORGE_E_UNDEFINED_SCORE = 5,
    FORGE_E_VALIDATION = 6,
    FORGE_E_STAGE = 7,
    FORGE_E_INTERNAL = 99
} forge_status;

FORGE_API const char* forge_last_error(void);
FORGE_API const char* forge_version(void);
FORGE_API void forge_free(char* p);

/* ------------------------------------------------------------- frames */

/* Scores a moment (directory of PGM/PPM files or a packed .frms file).
 * `select` > 0 also picks that many frames. JSON: {scores:[...], selected:[...]} */
FORGE_API forge_status forge_frames_score(const char* input, int select, int raw_phi, char** out_json);

/* -------------------------------------------------------------- model */

typedef struct forge_model forge_model;

typedef struct forge_schedule {
    int timesteps;
    double beta_start;
    double beta_end;
} forge_schedule;

FORGE_API forge_schedule forge_default_schedule(void);

FORGE_API forge_status forge_model_create(int channels, int embed_dim, const char* instance_token, uint64_t seed,
                                          forge_model** out);
FORGE_API forge_status forge_model_load(const char* path, forge_model** out);
FORGE_API forge_status forge_model_save(const forge_model* model, const char* path);
FORGE_API void forge_model_destroy(forge_model* model);
FORGE_API forge_status forge_model_param_count(const forge_model* model, size_t* out);
/* Digest of one parameter group: "spatial", "temporal" or "token". */
FORGE_API forge_status forge_model_digest(const forge_model* model, const char* group, char** out_hex);

/* Loss history is returned as a JSON array when out_json is not NULL. */
FORGE_API forge_status forge_model_train_stage1(forge_model* model, const char* instance_input, const char* class_input,
                                                const char* instance_prompt, const char* class_prompt,
                                                const forge_schedule* sched, int steps, double learning_rate,
                                                uint64_t seed, char** out_json);
FORGE_API forge_status forge_model_train_stage2(forge_model* model, const char* moment_input, const char* prompt,
                                                const forge_schedule* sched, int steps, double learning_rate,
                                                uint64_t seed, char** out_json);

typedef struct forge_train_params {
    const char* moment_input;
    const char* class_input;
    /* Stage-2 prompt, e.g. "[v] a person opens the door". */
    const char* source_prompt;
    const char* instance_prompt; /* NULL: "a [v] person" */
    const char* class_prompt;    /* NULL: "a person" */
    int select;                  /* frames used for stage 1 */
    int raw_phi;
    int stage1_steps;
    int stage2_steps;
    double learning_rate;
    uint64_t seed;
} forge_train_params;

FORGE_API forge_train_params forge_default_train_params(void);

/* Frame selection, stage 1 and stage 2 on one moment. Report JSON holds the
 * selected frames and both loss histories. */
FORGE_API forge_status forge_model_train_moment(forge_model* model, const forge_train_params* params,
                                                const forge_schedule* sched, char** out_report_json);

typedef struct forge_edit_params {
    const char* moment_input;
    const char* source_prompt;
    const char* edit_prompt;
    int inversion_steps;
    int sampling_steps;
    uint64_t seed;
    int literal_inversion;
    int null_prompt_inversion;
    /* Directory that receives the edited frames and provenance.json. */
    const char* out_dir;
} forge_edit_params;

FORGE_API forge_status forge_model_edit(const forge_model* model, const forge_edit_params* params,
                                        const forge_schedule* sched, char** out_provenance_json);

/* ----------------------------------------------------------- curation */

FORGE_API forge_status forge_harmonic_score(double prompt_fid, double struct_fid, double* out);
FORGE_API forge_status forge_curate_quant(const char* pool_path, size_t k, const char* out_path);
FORGE_API forge_status forge_curate_qual(const char* pool_path, const char* scores_csv, size_t l,
                                         const char* out_path);
/* per_sample != 0 averages per-item harmonic scores. */
FORGE_API forge_status forge_pool_report(const char* pool_path, int per_sample, char** out_json);

typedef enum forge_assemble_mode { FORGE_REPLACE = 0, FORGE_INJECT_AFTER = 1, FORGE_INJECT_BEFORE = 2 } forge_assemble_mode;

/* Edited duration is the frame count of `edited_input` over the video fps. */
FORGE_API forge_status forge_assemble(const char* video_json, size_t moment, const char* edited_input,
                                      const char* query, forge_assemble_mode mode, const char* out_json);

/* ----------------------------------------------------------------- eval */

FORGE_API forge_status forge_eval(const char* pred_path, const char* gt_path, const double* thresholds,
                                  size_t threshold_count, size_t rank, char** out_json, char** out_table);
/* Writes generation.jsonl and test.jsonl to out_dir; vocabulary is taken
 * from the queries in vocab_annotations. */
FORGE_API forge_status forge_novel_word_split(const char* corpus_path, const char* vocab_annotations, uint64_t seed,
                                              const char* out_dir, char** out_json);

/* ------------------------------------------------------------- pipeline */

typedef struct forge_run_overrides {
    int has_seed;
    uint64_t seed;
    int jobs;            /* 0 keeps the config value */
    const char* output;  /* NULL keeps the config value */
    int force;
    const char* until;   /* NULL runs every stage */
} forge_run_overrides;

/* FORGE_E_VALIDATION with a JSON array of messages in out_errors_json. */
FORGE_API forge_status forge_validate_config(const char* config_path, const forge_run_overrides* overrides,
                                             char** out_errors_json);
FORGE_API forge_status forge_run_pipeline(const char* config_path, const forge_run_overrides* overrides,
                                          char** out_manifest_json);
FORGE_API forge_status forge_demo_data(const char* dir, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif
