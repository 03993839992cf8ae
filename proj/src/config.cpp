#include "mmofl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mmofl/errors.hpp"

namespace mmofl {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& key, int line, const std::string& what) {
    std::string at = line > 0 ? "line " + std::to_string(line) + ": " : "";
    throw ConfigError(at + key + ": " + what);
}

double to_double(const std::string& v, const std::string& key, int line) {
    std::string low = v;
    std::transform(low.begin(), low.end(), low.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (low == "inf" || low == "+inf" || low == "infinity")
        return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) fail(key, line, "not a number: '" + v + "'");
        if (std::isnan(d)) fail(key, line, "NaN is not a valid value");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(key, line, "not a number: '" + v + "'");
    }
}

long long to_int(const std::string& v, const std::string& key, int line) {
    try {
        std::size_t used = 0;
        long long n = std::stoll(v, &used);
        if (used != v.size()) fail(key, line, "not an integer: '" + v + "'");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(key, line, "not an integer: '" + v + "'");
    }
}

int to_int_min(const std::string& v, const std::string& key, int line, long long lo) {
    long long n = to_int(v, key, line);
    if (n < lo) fail(key, line, "must be >= " + std::to_string(lo));
    if (n > std::numeric_limits<int>::max()) fail(key, line, "too large");
    return static_cast<int>(n);
}

std::uint64_t to_u64(const std::string& v, const std::string& key, int line) {
    try {
        std::size_t used = 0;
        unsigned long long n = std::stoull(v, &used);
        if (used != v.size() || v[0] == '-') fail(key, line, "not an unsigned integer: '" + v + "'");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(key, line, "not an unsigned integer: '" + v + "'");
    }
}

double to_fraction(const std::string& v, const std::string& key, int line) {
    double d = to_double(v, key, line);
    if (!(d >= 0.0 && d <= 1.0)) fail(key, line, "out of range [0,1]");
    return d;
}

double to_nonneg(const std::string& v, const std::string& key, int line) {
    double d = to_double(v, key, line);
    if (!(d >= 0.0)) fail(key, line, "must be >= 0");
    return d;
}

double to_positive(const std::string& v, const std::string& key, int line) {
    double d = to_double(v, key, line);
    if (!(d > 0.0)) fail(key, line, "must be > 0");
    return d;
}

bool to_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(key, line, "expected true/false");
}

std::vector<std::uint64_t> to_seed_list(const std::string& v, const std::string& key, int line) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(key, line, "empty seed entry");
        out.push_back(to_u64(item, key, line));
    }
    if (out.empty()) fail(key, line, "empty seed list");
    return out;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(15);
    ss << v;
    return ss.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

StrategyKind parse_strategy(const std::string& name) {
    if (name == "FC") return StrategyKind::FC;
    if (name == "IS") return StrategyKind::IS;
    if (name == "ZP") return StrategyKind::ZP;
    if (name == "PNR") return StrategyKind::PNR;
    if (name == "PQ") return StrategyKind::PQ;
    if (name == "BQ") return StrategyKind::BQ;
    if (name == "PLR") return StrategyKind::PLR;
    if (name == "QQR") return StrategyKind::QQR;
    throw ConfigError("unknown strategy '" + name +
                      "' (expected FC, IS, ZP, PNR, PQ, BQ, PLR, or QQR)");
}

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::FC: return "FC";
        case StrategyKind::IS: return "IS";
        case StrategyKind::ZP: return "ZP";
        case StrategyKind::PNR: return "PNR";
        case StrategyKind::PQ: return "PQ";
        case StrategyKind::BQ: return "BQ";
        case StrategyKind::PLR: return "PLR";
        case StrategyKind::QQR: return "QQR";
    }
    throw ConfigError("invalid strategy kind");
}

void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value,
              int line) {
    if (key == "data.source") {
        if (value != "synthetic" && value != "har-file")
            fail(key, line, "expected 'synthetic' or 'har-file'");
        cfg.source = value;
    } else if (key == "data.har_path") {
        cfg.har_path = value;
    } else if (key == "data.clients") {
        cfg.clients = to_int_min(value, key, line, 1);
    } else if (key == "data.modalities") {
        cfg.modalities = to_int_min(value, key, line, 2);
    } else if (key == "data.classes") {
        cfg.classes = to_int_min(value, key, line, 2);
    } else if (key == "data.dim") {
        cfg.dim = to_int_min(value, key, line, 1);
    } else if (key == "data.window") {
        cfg.window = to_int_min(value, key, line, 1);
    } else if (key == "data.refresh") {
        cfg.refresh = to_int_min(value, key, line, 0);
    } else if (key == "data.pool") {
        cfg.pool = to_int_min(value, key, line, 1);
    } else if (key == "data.alpha") {
        cfg.alpha = to_positive(value, key, line);
    } else if (key == "data.separation") {
        cfg.separation = to_nonneg(value, key, line);
    } else if (key == "data.noise_std") {
        cfg.noise_std = to_nonneg(value, key, line);
    } else if (key == "data.test_size") {
        cfg.test_size = to_int_min(value, key, line, 1);
    } else if (key == "model.hidden") {
        cfg.hidden = to_int_min(value, key, line, 1);
    } else if (key == "model.feat") {
        cfg.feat = to_int_min(value, key, line, 1);
    } else if (key == "model.eta") {
        cfg.eta = to_positive(value, key, line);
    } else if (key == "model.decay") {
        cfg.decay = to_double(value, key, line);
        if (!(cfg.decay > 0.0 && cfg.decay <= 1.0)) fail(key, line, "out of range (0,1]");
    } else if (key == "model.eta_min") {
        cfg.eta_min = to_nonneg(value, key, line);
    } else if (key == "model.local_steps") {
        cfg.local_steps = to_int_min(value, key, line, 1);
    } else if (key == "model.batch_size") {
        cfg.batch_size = to_int_min(value, key, line, 0);
    } else if (key == "imbalance.miss_fraction") {
        cfg.miss_fraction = to_fraction(value, key, line);
    } else if (key == "imbalance.round_fraction_quantity") {
        cfg.round_fraction_quantity = to_fraction(value, key, line);
    } else if (key == "imbalance.round_fraction_quality") {
        cfg.round_fraction_quality = to_fraction(value, key, line);
    } else if (key == "imbalance.snr_db") {
        cfg.snr_db = to_double(value, key, line);
    } else if (key == "strategy.kind") {
        try {
            cfg.strategy.kind = parse_strategy(value);
        } catch (const ConfigError& e) {
            fail(key, line, e.what());
        }
    } else if (key == "strategy.beta") {
        cfg.strategy.beta = to_nonneg(value, key, line);
    } else if (key == "strategy.bits") {
        int b = to_int_min(value, key, line, 1);
        if (!((b >= 1 && b <= 16) || b == 32)) fail(key, line, "must be in [1,16] or 32");
        cfg.strategy.bits = b;
    } else if (key == "strategy.support_weighted") {
        cfg.support_weighted = to_bool(value, key, line);
    } else if (key == "strategy.literal_round_count") {
        cfg.literal_round_count = to_bool(value, key, line);
    } else if (key == "run.rounds") {
        cfg.rounds = to_int_min(value, key, line, 1);
    } else if (key == "run.seed") {
        cfg.seed = to_u64(value, key, line);
    } else if (key == "run.seeds") {
        cfg.seeds = to_seed_list(value, key, line);
    } else if (key == "run.out") {
        if (value.empty()) fail(key, line, "must not be empty");
        cfg.out = value;
    } else if (key == "run.hindsight_epochs") {
        cfg.hindsight_epochs = to_int_min(value, key, line, 0);
    } else if (key == "run.hindsight_eta") {
        cfg.hindsight_eta = to_nonneg(value, key, line);
    } else {
        fail(key, line, "unknown key");
    }
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.source == "har-file" && cfg.har_path.empty())
        throw ConfigError("data.har_path: required when data.source = har-file");
    if (cfg.source == "synthetic" && static_cast<long long>(cfg.pool) * cfg.clients <
                                         static_cast<long long>(cfg.classes))
        throw ConfigError("data.pool: master pool smaller than the class count");
    if (cfg.window > cfg.pool * cfg.clients)
        throw ConfigError("data.window: window larger than the master pool");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                              trim(raw) + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.find('.') == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                              "' missing its section prefix");
        apply_kv(cfg, key, value, line_no);
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("data.source", c.source);
    kv.emplace_back("data.har_path", c.har_path);
    kv.emplace_back("data.clients", std::to_string(c.clients));
    kv.emplace_back("data.modalities", std::to_string(c.modalities));
    kv.emplace_back("data.classes", std::to_string(c.classes));
    kv.emplace_back("data.dim", std::to_string(c.dim));
    kv.emplace_back("data.window", std::to_string(c.window));
    kv.emplace_back("data.refresh", std::to_string(c.refresh));
    kv.emplace_back("data.pool", std::to_string(c.pool));
    kv.emplace_back("data.alpha", fmt(c.alpha));
    kv.emplace_back("data.separation", fmt(c.separation));
    kv.emplace_back("data.noise_std", fmt(c.noise_std));
    kv.emplace_back("data.test_size", std::to_string(c.test_size));
    kv.emplace_back("model.hidden", std::to_string(c.hidden));
    kv.emplace_back("model.feat", std::to_string(c.feat));
    kv.emplace_back("model.eta", fmt(c.eta));
    kv.emplace_back("model.decay", fmt(c.decay));
    kv.emplace_back("model.eta_min", fmt(c.eta_min));
    kv.emplace_back("model.local_steps", std::to_string(c.local_steps));
    kv.emplace_back("model.batch_size", std::to_string(c.batch_size));
    kv.emplace_back("imbalance.miss_fraction", fmt(c.miss_fraction));
    kv.emplace_back("imbalance.round_fraction_quantity", fmt(c.round_fraction_quantity));
    kv.emplace_back("imbalance.round_fraction_quality", fmt(c.round_fraction_quality));
    kv.emplace_back("imbalance.snr_db", fmt(c.snr_db));
    kv.emplace_back("strategy.kind", to_string(c.strategy.kind));
    kv.emplace_back("strategy.beta", fmt(c.strategy.beta));
    kv.emplace_back("strategy.bits", std::to_string(c.strategy.bits));
    kv.emplace_back("strategy.support_weighted", fmt(c.support_weighted));
    kv.emplace_back("strategy.literal_round_count", fmt(c.literal_round_count));
    kv.emplace_back("run.rounds", std::to_string(c.rounds));
    kv.emplace_back("run.seed", std::to_string(c.seed));
    {
        std::string s;
        for (std::uint64_t v : c.seed_list()) {
            if (!s.empty()) s += ",";
            s += std::to_string(v);
        }
        kv.emplace_back("run.seeds", s);
    }
    kv.emplace_back("run.out", c.out);
    kv.emplace_back("run.hindsight_epochs", std::to_string(c.hindsight_epochs));
    kv.emplace_back("run.hindsight_eta", fmt(c.hindsight_eta));
    return kv;
}

}  // namespace mmofl
