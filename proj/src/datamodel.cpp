#include "cmfuse/datamodel.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cmfuse/error.hpp"

namespace fs = std::filesystem;

namespace cmfuse {

namespace {

const std::string kStageNames[] = {"NC", "EMCI", "LMCI", "AD"};

constexpr double kSymTol = 1e-9;
constexpr double kRangeTol = 1e-12;

void check_symmetric(const Tensor& m, double tol, const std::string& what) {
    if (m.rows() != m.cols()) {
        throw invariant_error(what + ": not square (" + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ")");
    }
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = i + 1; j < m.cols(); ++j) {
            if (std::fabs(m.at(i, j) - m.at(j, i)) > tol) {
                throw invariant_error(what + ": asymmetric at (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
            }
        }
    }
}

}  // namespace

const std::string& stage_name(Stage s) { return kStageNames[static_cast<int>(s)]; }

std::optional<Stage> stage_from_name(const std::string& name) {
    for (int i = 0; i < kStageCount; ++i) {
        if (kStageNames[i] == name) return static_cast<Stage>(i);
    }
    return std::nullopt;
}

ConnMatrix::ConnMatrix(Tensor values, ConnFlavor flavor) : values_(std::move(values)), flavor_(flavor) {
    const std::string what = flavor == ConnFlavor::Structural ? "ConnMatrix(Structural)" : "ConnMatrix(Functional)";
    if (!values_.all_finite()) throw invariant_error(what + ": non-finite entry");
    check_symmetric(values_, kSymTol, what);
    const int n = values_.rows();
    if (flavor == ConnFlavor::Structural) {
        for (int i = 0; i < n; ++i) {
            if (std::fabs(values_.at(i, i)) > kRangeTol) {
                throw invariant_error(what + ": nonzero diagonal at " + std::to_string(i));
            }
            for (int j = 0; j < n; ++j) {
                if (values_.at(i, j) < -kRangeTol) {
                    throw invariant_error(what + ": negative entry at (" + std::to_string(i) + "," +
                                          std::to_string(j) + ")");
                }
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            if (std::fabs(values_.at(i, i) - 1.0) > kRangeTol) {
                throw invariant_error(what + ": diagonal not 1 at " + std::to_string(i));
            }
            for (int j = 0; j < n; ++j) {
                if (std::fabs(values_.at(i, j)) > 1.0 + kRangeTol) {
                    throw invariant_error(what + ": entry outside [-1,1] at (" + std::to_string(i) +
                                          "," + std::to_string(j) + ")");
                }
            }
        }
    }
}

void Subject::validate() const {
    if (bold.rows() != sc_emp.n() || bold.rows() != fc_emp.n()) {
        throw invariant_error("Subject " + id + ": ROI count mismatch between BOLD and connectivity");
    }
    if (sc_emp.flavor() != ConnFlavor::Structural || fc_emp.flavor() != ConnFlavor::Functional) {
        throw invariant_error("Subject " + id + ": connectivity flavors swapped");
    }
    if (bold.cols() < 20) {
        throw invariant_error("Subject " + id + ": BOLD too short (T=" + std::to_string(bold.cols()) +
                              ", need >= 20)");
    }
    if (!bold.all_finite()) throw invariant_error("Subject " + id + ": non-finite BOLD value");
}

ConnMatrix pearson_fc(const Tensor& bold) {
    const int n = bold.rows();
    const int T = bold.cols();
    if (T < 2) throw invariant_error("pearson_fc: need at least 2 time points");
    std::vector<double> mean(n, 0.0), sd(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int t = 0; t < T; ++t) s += bold.at(i, t);
        mean[i] = s / T;
        double v = 0.0;
        for (int t = 0; t < T; ++t) {
            const double d = bold.at(i, t) - mean[i];
            v += d * d;
        }
        if (v <= 0.0) throw invariant_error("pearson_fc: zero-variance row " + std::to_string(i));
        sd[i] = std::sqrt(v);
    }
    Tensor fc(n, n);
    for (int i = 0; i < n; ++i) {
        fc.at(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            double c = 0.0;
            for (int t = 0; t < T; ++t) c += (bold.at(i, t) - mean[i]) * (bold.at(j, t) - mean[j]);
            double r = c / (sd[i] * sd[j]);
            r = std::min(1.0, std::max(-1.0, r));
            fc.at(i, j) = r;
            fc.at(j, i) = r;
        }
    }
    return ConnMatrix(std::move(fc), ConnFlavor::Functional);
}

Tensor vec_upper(const Tensor& m, bool include_diag) {
    check_symmetric(m, kSymTol, "vec_upper");
    const int n = m.rows();
    const int len = include_diag ? n * (n + 1) / 2 : n * (n - 1) / 2;
    Tensor out(1, len);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = include_diag ? i : i + 1; j < n; ++j) out[k++] = m.at(i, j);
    }
    return out;
}

Tensor unvec_upper(const Tensor& vec, int n, bool include_diag, double diag_fill) {
    const int len = include_diag ? n * (n + 1) / 2 : n * (n - 1) / 2;
    if (static_cast<int>(vec.size()) != len) {
        throw invariant_error("unvec_upper: vector length " + std::to_string(vec.size()) +
                              " does not match n=" + std::to_string(n));
    }
    Tensor m(n, n);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        if (!include_diag) m.at(i, i) = diag_fill;
        for (int j = include_diag ? i : i + 1; j < n; ++j) {
            m.at(i, j) = vec[k];
            m.at(j, i) = vec[k];
            ++k;
        }
    }
    return m;
}

void write_csv_matrix(const std::string& path, const Tensor& m) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    char buf[40];
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
            out << buf;
            if (j + 1 < m.cols()) out << ',';
        }
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

Tensor read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            const std::string cell = line.substr(pos, comma - pos);
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw io_error("bad numeric cell '" + cell + "' in " + path);
            }
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw io_error("ragged rows in " + path);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw io_error("empty CSV: " + path);
    Tensor m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    }
    return m;
}

void save_cohort(const std::vector<Subject>& subjects, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& s : subjects) {
        s.validate();
        const std::string bold_file = s.id + "_bold.csv";
        const std::string sc_file = s.id + "_sc.csv";
        const std::string fc_file = s.id + "_fc.csv";
        write_csv_matrix(dir + "/" + bold_file, s.bold);
        write_csv_matrix(dir + "/" + sc_file, s.sc_emp.values());
        write_csv_matrix(dir + "/" + fc_file, s.fc_emp.values());
        manifest.push_back({{"id", s.id},
                            {"stage", stage_name(s.stage)},
                            {"n", s.n()},
                            {"T", s.t_len()},
                            {"bold", bold_file},
                            {"sc", sc_file},
                            {"fc", fc_file}});
    }
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw io_error("cannot open for writing: " + dir + "/manifest.json");
    out << manifest.dump(2) << '\n';
}

std::vector<Subject> load_cohort(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw io_error("cannot open: " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw io_error("bad manifest.json in " + dir + ": " + e.what());
    }
    if (!manifest.is_array()) throw io_error("manifest.json must be an array: " + dir);

    std::vector<Subject> subjects;
    for (const auto& rec : manifest) {
        Subject s;
        try {
            s.id = rec.at("id").get<std::string>();
        } catch (const std::exception&) {
            throw io_error("manifest record missing id in " + dir);
        }
        const std::string stage_str = rec.value("stage", "");
        const auto stage = stage_from_name(stage_str);
        if (!stage) throw invariant_error("subject " + s.id + ": unknown stage '" + stage_str + "'");
        s.stage = *stage;
        const int n = rec.value("n", -1);
        const int T = rec.value("T", -1);
        for (const char* key : {"bold", "sc", "fc"}) {
            const std::string file = rec.value(key, "");
            const std::string path = dir + "/" + file;
            if (file.empty() || !fs::exists(path)) {
                throw io_error("subject " + s.id + ": missing " + key + " file '" + file + "'");
            }
        }
        try {
            s.bold = read_csv_matrix(dir + "/" + rec.at("bold").get<std::string>());
            Tensor sc = read_csv_matrix(dir + "/" + rec.at("sc").get<std::string>());
            Tensor fc = read_csv_matrix(dir + "/" + rec.at("fc").get<std::string>());
            s.sc_emp = ConnMatrix(std::move(sc), ConnFlavor::Structural);
            s.fc_emp = ConnMatrix(std::move(fc), ConnFlavor::Functional);
        } catch (const Error& e) {
            throw Error(e.kind(), "subject " + s.id + ": " + e.what());
        }
        if (s.bold.rows() != n || s.bold.cols() != T) {
            throw invariant_error("subject " + s.id + ": BOLD shape " + std::to_string(s.bold.rows()) +
                                  "x" + std::to_string(s.bold.cols()) + " disagrees with manifest " +
                                  std::to_string(n) + "x" + std::to_string(T));
        }
        s.validate();
        subjects.push_back(std::move(s));
    }
    return subjects;
}

}  // namespace cmfuse
