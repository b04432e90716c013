#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"
#include "ceda/discretize.hpp"
#include "ceda/matrix.hpp"

namespace ceda {

/// Responses and covariates of a response manifold; covariates default to
/// every other non-label column.
struct ResponseSpec {
    std::vector<std::string> responses;
    std::vector<std::string> covariates;

    /// Throws a config error for no responses, overlap between the two lists,
    /// or names the table lacks.
    void validate(const DataTable& table) const;
};

/// Response spread inside one bin of a candidate; these are the strips one
/// would inspect on a plot of the manifold coloured by the candidate.
struct StripStat {
    std::string bin;
    std::size_t count = 0;
    std::vector<double> response_mean;
    std::vector<double> response_sd;
};

struct MajorFeatureScore {
    std::string feature;
    /// 1 - directed conditional entropy from the candidate's bins to the
    /// occupied joint response cells.
    double score = 0.0;
    double threshold = 0.35;
    bool major = false;
    std::vector<StripStat> strips;
};

/// Responses and continuous candidates are categorized with `binnings`
/// (built from the table when absent). Throws on a degenerate candidate.
MajorFeatureScore score_major_candidate(const DataTable& train, const ResponseSpec& spec, const std::string& candidate,
                                        const BinningSet& binnings = {}, double threshold = 0.35);

struct LatticeCell {
    std::string name;
    std::vector<int> bins;             // one per major
    std::vector<std::size_t> members;  // row indices of the training table
};

/// Rectangles framed by the bins of the major covariates. Cells are stored
/// in row-major bin order (first major slowest) and include empty ones.
/// Cell names use a letter for the first major's bin and numbers for the
/// others: "A1", "B3", "C2.4".
struct LocalityLattice {
    std::vector<std::string> majors;
    std::vector<std::string> responses;
    std::vector<Binning> binnings;
    Standardizer scaler;
    std::vector<LatticeCell> cells;
    std::size_t usable_rows = 0;
    std::size_t excluded_rows = 0;

    std::size_t cell_index(std::span<const int> bins) const;
    /// Bins of a raw major vector; out-of-range values clamp to the end bins.
    std::vector<int> locate(std::span<const double> majors, bool* clamped = nullptr) const;
    std::size_t occupied_cells() const;
    std::optional<std::size_t> find_cell(const std::string& name) const;
};

/// Majors must be numeric; their binnings come from `binnings` or are built
/// from the table. Rows missing a major or a response are excluded.
LocalityLattice build_locality_lattice(const DataTable& train, const ResponseSpec& spec,
                                       std::span<const std::string> majors, const BinningSet& binnings = {});

/// Three equal-width bins per feature, the coarse patch view.
BinningSet coarse_binnings(const DataTable& train, std::span<const std::string> features, std::size_t bins = 3);

struct MinorEntropy {
    std::string patch;
    std::string feature;
    std::size_t members = 0;
    std::size_t categories = 0;
    /// Shannon entropy of the candidate's category shares inside the patch,
    /// divided by log(number of categories of the candidate).
    double normalized = 0.0;
};

struct MinorFeatureSummary {
    std::string feature;
    double min_entropy = 0.0;
    double max_entropy = 0.0;
    /// Low entropy in at least one patch.
    bool minor = false;
};

struct MinorFeatureReport {
    std::vector<MinorEntropy> entries;
    std::vector<MinorFeatureSummary> summary;
    double threshold = 0.5;
};

/// Patches with fewer than 2 members with a value are skipped.
MinorFeatureReport minor_feature_entropy(const LocalityLattice& lattice, const DataTable& train,
                                         std::span<const std::string> candidates, const BinningSet& binnings = {},
                                         double threshold = 0.5);

struct RmaPrediction {
    std::vector<double> response;
    std::size_t cell = 0;
    std::size_t neighbors = 0;
    std::size_t focal = 0;
    bool clamped = false;
    /// The rectangle held fewer than k* rows.
    bool underfilled = false;
    /// The rectangle was empty and adjacent rectangles supplied neighbours.
    bool spilled = false;
    /// The minor sieve removed every neighbour.
    bool sieve_fallback = false;

    bool flagged() const { return clamped || underfilled || spilled || sieve_fallback; }
};

/// Locality-restricted nearest-neighbour predictor over a fixed lattice.
///
/// A query is placed in its rectangle, the k* nearest members by
/// standardized major distance are taken (all members when fewer), the
/// neighbours are sieved to those matching the query on every minor
/// feature, and the focal subset's mean response is returned. Continuous
/// minors match on bin, other minors on value.
class RmaModel {
public:
    RmaModel(const DataTable& train, LocalityLattice lattice, std::vector<std::string> minors = {},
             const BinningSet& minor_binnings = {}, std::size_t k_star = 20);

    const LocalityLattice& lattice() const { return lattice_; }
    const std::vector<std::string>& minors() const { return minors_; }
    std::size_t k_star() const { return k_star_; }

    /// Minor keys of a row of any table with the training schema. NaN marks
    /// a missing value, which does not take part in the sieve.
    std::vector<double> minor_keys(const DataTable& table, std::size_t row) const;

    /// `majors` are raw values in lattice order. Throws "uncovered covariate
    /// region" when the rectangle and all adjacent ones are empty.
    RmaPrediction predict(std::span<const double> majors, std::span<const double> minor_keys) const;

    /// Predicts every row complete in the majors; `rows` receives their indices.
    std::vector<RmaPrediction> predict_table(const DataTable& test, std::vector<std::size_t>* rows = nullptr) const;

private:
    LocalityLattice lattice_;
    std::vector<std::string> minors_;
    std::vector<std::optional<Binning>> minor_binnings_;
    std::vector<std::vector<std::string>> minor_levels_;
    std::size_t k_star_;
    Matrix points_;     // standardized majors per training row
    Matrix responses_;  // per training row
    Matrix keys_;       // minor keys per training row
};

struct PatchError {
    std::string patch;
    std::size_t n = 0;
    std::vector<double> mse;  // per response
    double correlated_global = 0.0;
    std::optional<double> correlated_patch;
    bool ridge_global = false;
    bool ridge_patch = false;
};

struct ErrorReport {
    std::vector<std::string> responses;
    std::vector<PatchError> patches;
    /// Over all test points.
    PatchError pooled;
    /// Unweighted mean of the per-patch values.
    PatchError patch_mean;
    Matrix sigma;
};

/// Inverse of a covariance, guarded by eps I with eps = 1e-8 trace / m when
/// the matrix is near singular.
struct GuardedInverse {
    Matrix inverse;
    bool ridge = false;
};
GuardedInverse guarded_inverse(const Matrix& covariance);

/// Sample covariance (n - 1) of response rows.
Matrix sample_covariance(const Matrix& rows);

/// predictions and truths are n x m. Per patch: (1) mean squared error per
/// response, (2) mean of e' S^-1 e with S the training response covariance
/// (or `sigma_override`), (3) the same with the patch's own covariance,
/// omitted for patches with fewer than 3 training members.
ErrorReport error_metrics(const Matrix& predictions, const Matrix& truths, std::span<const std::size_t> patch_of,
                          const LocalityLattice& lattice, const DataTable& train,
                          const std::optional<Matrix>& sigma_override = std::nullopt);

struct OlsFit {
    std::string label;
    std::string response;
    std::vector<std::string> covariates;
    std::size_t n = 0;
    double intercept = 0.0;
    std::vector<double> slopes;
    /// Standard errors and two-sided p-values; index 0 is the intercept.
    std::vector<double> std_errors;
    std::vector<double> p_values;
    double residual_se = 0.0;
    std::size_t df = 0;

    bool significant(std::size_t term, double alpha = 0.05) const { return p_values.at(term) < alpha; }
};

/// Least squares with intercept via column-pivoted QR. Throws a data error
/// naming the collinear columns when the design is rank deficient, or when
/// n <= p + 1.
OlsFit ols_fit_design(const Matrix& x, std::span<const double> y, std::vector<std::string> covariates,
                      std::string label = {}, std::string response = {});

/// One fit per label (labels without rows are skipped) or one pooled fit
/// labelled "all". Rows missing a value are dropped.
std::vector<OlsFit> ols_fit(const LabeledDataset& ds, const std::string& response,
                            std::span<const std::string> covariates, bool per_label = true);

/// label, intercept, one column per covariate, residual_std_error, df;
/// estimates with 3 decimals and "*" when p < 0.05.
void write_ols_table_csv(std::ostream& out, const std::vector<OlsFit>& fits);

void write_major_scores_csv(std::ostream& out, const std::vector<MajorFeatureScore>& scores);
nlohmann::json lattice_json(const LocalityLattice& lattice);
void write_minor_entropy_csv(std::ostream& out, const MinorFeatureReport& report);
void write_error_report_csv(std::ostream& out, const ErrorReport& report);
/// Whitespace-separated plot data, one line per training row: row id,
/// responses, majors, patch and label (when `label_column` is given).
void write_manifold_plot_data(std::ostream& out, const DataTable& train, const LocalityLattice& lattice,
                              const std::string& label_column = {});

}  // namespace ceda
