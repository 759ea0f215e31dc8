#include "cmfuse/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cmfuse/error.hpp"

namespace cmfuse {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Pulls typed values out of the kv map while tracking consumed keys so
// leftovers can be reported as unknown.
class KvReader {
public:
    explicit KvReader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

    bool take(const std::string& key, std::string& out) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return false;
        consumed_.insert(key);
        out = it->second;
        return true;
    }

    void get_int(const std::string& key, int& out) {
        std::string v;
        if (!take(key, v)) return;
        try {
            std::size_t pos = 0;
            out = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
        } catch (const std::exception&) {
            throw usage_error("config key '" + key + "': bad integer '" + v + "'");
        }
    }

    void get_u64(const std::string& key, std::uint64_t& out) {
        std::string v;
        if (!take(key, v)) return;
        try {
            std::size_t pos = 0;
            out = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
        } catch (const std::exception&) {
            throw usage_error("config key '" + key + "': bad unsigned integer '" + v + "'");
        }
    }

    void get_double(const std::string& key, double& out) {
        std::string v;
        if (!take(key, v)) return;
        try {
            std::size_t pos = 0;
            out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
        } catch (const std::exception&) {
            throw usage_error("config key '" + key + "': bad number '" + v + "'");
        }
    }

    void get_bool(const std::string& key, bool& out) {
        std::string v;
        if (!take(key, v)) return;
        if (v == "true" || v == "1") out = true;
        else if (v == "false" || v == "0") out = false;
        else throw usage_error("config key '" + key + "': bad bool '" + v + "'");
    }

    void get_string(const std::string& key, std::string& out) { take(key, out); }

    void get_int_list(const std::string& key, std::vector<int>& out) {
        std::string v;
        if (!take(key, v)) return;
        out.clear();
        if (trim(v).empty()) return;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            try {
                std::size_t pos = 0;
                out.push_back(std::stoi(item, &pos));
                if (pos != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw usage_error("config key '" + key + "': bad list entry '" + item + "'");
            }
        }
    }

    template <typename T, typename Getter>
    void get_stage_map(const std::string& prefix, std::map<Stage, T>& out, Getter getter) {
        for (Stage s : kAllStages) {
            const std::string key = prefix + "." + stage_name(s);
            T v = out.at(s);
            (this->*getter)(key, v);
            out[s] = v;
        }
    }

    void finish(const std::string& what) const {
        for (const auto& [key, value] : kv_) {
            if (consumed_.count(key) == 0) {
                throw usage_error(what + ": unknown config key '" + key + "'");
            }
        }
    }

private:
    const std::map<std::string, std::string>& kv_;
    std::set<std::string> consumed_;
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw usage_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw usage_error(path + ":" + std::to_string(lineno) + ": empty key");
        }
        kv[key] = value;
    }
    return kv;
}

PhantomSpec phantom_spec_from_kv(const std::map<std::string, std::string>& kv) {
    PhantomSpec spec;
    KvReader r(kv);
    r.get_int("n", spec.n);
    r.get_int("T", spec.T);
    r.get_int("n_blocks", spec.n_blocks);
    r.get_stage_map("subjects_per_stage", spec.subjects_per_stage, &KvReader::get_int);
    r.get_int_list("affected_rois", spec.affected_rois);
    r.get_stage_map("attenuation", spec.attenuation, &KvReader::get_double);
    r.get_int_list("compensation_rois", spec.compensation_rois);
    r.get_stage_map("compensation_gain", spec.compensation_gain, &KvReader::get_double);
    r.get_double("noise_sigma", spec.noise_sigma);
    r.get_double("rho", spec.rho);
    r.get_u64("seed", spec.seed);
    r.finish("PhantomSpec");
    spec.validate();
    return spec;
}

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv) {
    TrainConfig cfg;
    KvReader r(kv);
    r.get_int("epochs", cfg.epochs);
    r.get_int("batch_size", cfg.batch_size);
    r.get_double("lr", cfg.lr);
    r.get_double("weight_decay", cfg.weight_decay);
    r.get_double("beta1", cfg.beta1);
    r.get_double("beta2", cfg.beta2);
    r.get_double("lambda_mix", cfg.lambda_mix);
    r.get_double("w_adv", cfg.w_adv);
    r.get_double("w_cls", cfg.w_cls);
    r.get_double("w_rcs", cfg.w_rcs);
    r.get_int("d", cfg.d);
    r.get_int("d_k", cfg.d_k);
    r.get_int("d_v", cfg.d_v);
    r.get_int("hidden", cfg.hidden);
    r.get_bool("g_adv_saturating", cfg.g_adv_saturating);
    r.get_u64("seed", cfg.seed);
    r.get_int("checkpoint_every", cfg.checkpoint_every);
    r.get_string("checkpoint_path", cfg.checkpoint_path);
    r.get_string("metrics_path", cfg.metrics_path);
    r.get_int("threads", cfg.threads);
    r.finish("TrainConfig");
    cfg.validate();
    return cfg;
}

std::string phantom_spec_to_kv(const PhantomSpec& spec) {
    std::ostringstream os;
    os << "n = " << spec.n << '\n';
    os << "T = " << spec.T << '\n';
    os << "n_blocks = " << spec.n_blocks << '\n';
    for (Stage s : kAllStages) {
        os << "subjects_per_stage." << stage_name(s) << " = " << spec.subjects_per_stage.at(s) << '\n';
    }
    os << "affected_rois = " << fmt_int_list(spec.affected_rois) << '\n';
    for (Stage s : kAllStages) {
        os << "attenuation." << stage_name(s) << " = " << fmt_double(spec.attenuation.at(s)) << '\n';
    }
    os << "compensation_rois = " << fmt_int_list(spec.compensation_rois) << '\n';
    for (Stage s : kAllStages) {
        os << "compensation_gain." << stage_name(s) << " = " << fmt_double(spec.compensation_gain.at(s))
           << '\n';
    }
    os << "noise_sigma = " << fmt_double(spec.noise_sigma) << '\n';
    os << "rho = " << fmt_double(spec.rho) << '\n';
    os << "seed = " << spec.seed << '\n';
    return os.str();
}

std::string train_config_to_kv(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "epochs = " << cfg.epochs << '\n';
    os << "batch_size = " << cfg.batch_size << '\n';
    os << "lr = " << fmt_double(cfg.lr) << '\n';
    os << "weight_decay = " << fmt_double(cfg.weight_decay) << '\n';
    os << "beta1 = " << fmt_double(cfg.beta1) << '\n';
    os << "beta2 = " << fmt_double(cfg.beta2) << '\n';
    os << "lambda_mix = " << fmt_double(cfg.lambda_mix) << '\n';
    os << "w_adv = " << fmt_double(cfg.w_adv) << '\n';
    os << "w_cls = " << fmt_double(cfg.w_cls) << '\n';
    os << "w_rcs = " << fmt_double(cfg.w_rcs) << '\n';
    os << "d = " << cfg.d << '\n';
    os << "d_k = " << cfg.d_k << '\n';
    os << "d_v = " << cfg.d_v << '\n';
    os << "hidden = " << cfg.hidden << '\n';
    os << "g_adv_saturating = " << (cfg.g_adv_saturating ? "true" : "false") << '\n';
    os << "seed = " << cfg.seed << '\n';
    os << "checkpoint_every = " << cfg.checkpoint_every << '\n';
    os << "checkpoint_path = " << cfg.checkpoint_path << '\n';
    os << "metrics_path = " << cfg.metrics_path << '\n';
    os << "threads = " << cfg.threads << '\n';
    return os.str();
}

}  // namespace cmfuse
