#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmfuse/tensor.hpp"

namespace cmfuse {

// Disease stages in progression order.
enum class Stage : int { NC = 0, EMCI = 1, LMCI = 2, AD = 3 };

inline constexpr Stage kAllStages[] = {Stage::NC, Stage::EMCI, Stage::LMCI, Stage::AD};
inline constexpr int kStageCount = 4;

const std::string& stage_name(Stage s);
std::optional<Stage> stage_from_name(const std::string& name);

enum class ConnFlavor { Structural, Functional };

// Symmetric n x n connectivity matrix. Construction validates the flavor
// invariants: structural entries are non-negative with a zero diagonal,
// functional entries lie in [-1, 1] with a unit diagonal.
class ConnMatrix {
public:
    ConnMatrix() = default;
    ConnMatrix(Tensor values, ConnFlavor flavor);

    int n() const { return values_.rows(); }
    ConnFlavor flavor() const { return flavor_; }
    const Tensor& values() const { return values_; }

    bool operator==(const ConnMatrix& other) const {
        return flavor_ == other.flavor_ && values_ == other.values_;
    }

private:
    Tensor values_;
    ConnFlavor flavor_ = ConnFlavor::Structural;
};

// One participant: BOLD panel (ROIs x time points), empirical SC and FC,
// and the disease-stage label. Immutable after load.
struct Subject {
    std::string id;
    Tensor bold;
    ConnMatrix sc_emp;
    ConnMatrix fc_emp;
    Stage stage = Stage::NC;

    int n() const { return bold.rows(); }
    int t_len() const { return bold.cols(); }
    void validate() const;
};

// Pearson correlation matrix of the BOLD rows. Exactly symmetric, unit
// diagonal. Rejects zero-variance rows by index.
ConnMatrix pearson_fc(const Tensor& bold);

// Row-major upper-triangle flattening of a symmetric matrix (checked within
// 1e-9), strict or inclusive of the diagonal.
Tensor vec_upper(const Tensor& m, bool include_diag);
// Exact inverse given the same convention; diag_fill is used in strict mode.
Tensor unvec_upper(const Tensor& vec, int n, bool include_diag, double diag_fill = 0.0);

// Cohort directory I/O: manifest.json plus per-subject CSV files.
std::vector<Subject> load_cohort(const std::string& dir);
void save_cohort(const std::vector<Subject>& subjects, const std::string& dir);

// Round-trip-exact CSV helpers shared by cohort and metrics output.
void write_csv_matrix(const std::string& path, const Tensor& m);
Tensor read_csv_matrix(const std::string& path);

}  // namespace cmfuse
