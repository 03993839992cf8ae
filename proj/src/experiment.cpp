#include "mmofl/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "mmofl/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmofl {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

namespace {

std::string num(double v) {
    std::ostringstream ss;
    ss << std::setprecision(12) << v;
    return ss.str();
}

void ensure_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw FormatError("cannot create output directory " + dir.string());
    const fs::path probe = dir / ".write_probe";
    {
        std::ofstream out(probe);
        if (!out) throw FormatError("output directory not writable: " + dir.string());
    }
    fs::remove(probe, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("write failed for " + path.string());
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read back " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string metrics_csv(const ExperimentConfig& cfg, std::uint64_t seed, const RunResult& r) {
    std::ostringstream out;
    out << "round,strategy,seed,train_loss,test_acc,cum_loss,avg_regret_clean,"
           "avg_regret_degraded,bytes_model_up,bytes_model_down,bytes_proto_up,"
           "bytes_proto_down\n";
    const std::string strat = to_string(cfg.strategy.kind);
    for (std::size_t t = 0; t < r.metrics.size(); ++t) {
        const RoundMetrics& m = r.metrics[t];
        out << m.round << ',' << strat << ',' << seed << ',' << num(m.train_loss) << ','
            << num(m.test_acc) << ',' << num(m.cum_loss) << ',' << num(r.regret_clean[t]) << ','
            << num(r.regret_degraded[t]) << ',' << m.bytes_model_up << ','
            << m.bytes_model_down << ',' << m.bytes_proto_up << ',' << m.bytes_proto_down
            << '\n';
    }
    return out.str();
}

json summary_json(const ExperimentConfig& cfg, std::uint64_t seed, const RunResult& r) {
    json config;
    for (const auto& [k, v] : config_echo(cfg)) config[k] = v;
    std::size_t up = 0, down = 0, pup = 0, pdown = 0;
    for (const RoundMetrics& m : r.metrics) {
        up += m.bytes_model_up;
        down += m.bytes_model_down;
        pup += m.bytes_proto_up;
        pdown += m.bytes_proto_down;
    }
    json j;
    j["config"] = config;
    j["seed"] = seed;
    j["final_accuracy"] = r.final_acc;
    j["mean_last10_accuracy"] = r.last10_acc;
    j["total_bytes"] = {{"model_up", up},
                        {"model_down", down},
                        {"proto_up", pup},
                        {"proto_down", pdown}};
    j["counters"] = {{"is_skips", r.counters.is_skips},
                     {"pnr_zero_fallbacks", r.counters.pnr_zero_fallbacks},
                     {"pce_row_fallbacks", r.counters.pce_row_fallbacks},
                     {"zero_pad_fallbacks", r.counters.zero_pad_fallbacks},
                     {"gate_violations", r.counters.gate_violations}};
    j["regret"] = {{"online_clean_total", r.online_clean_total},
                   {"hindsight_clean_total", r.hindsight_clean_total},
                   {"final_avg_regret_clean",
                    r.regret_clean.empty() ? 0.0 : r.regret_clean.back()},
                   {"final_avg_regret_degraded",
                    r.regret_degraded.empty() ? 0.0 : r.regret_degraded.back()}};
    j["hindsight_is_approximation"] = true;
    return j;
}

double mean_of(const Vec& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const Vec& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

std::string plot_script(const std::string& title) {
    std::ostringstream out;
    out << "# gnuplot script: accuracy vs round and vs cumulative uplink bytes\n"
        << "set datafile separator ','\n"
        << "set key bottom right\n"
        << "set grid\n"
        << "set terminal pngcairo size 900,600\n"
        << "set output 'accuracy_vs_round.png'\n"
        << "set xlabel 'round'\n"
        << "set ylabel 'test accuracy'\n"
        << "set title '" << title << "'\n"
        << "plot 'aggregate.csv' every ::1 using 1:2 with lines lw 2 title 'mean', \\\n"
        << "     'aggregate.csv' every ::1 using 1:($2+$3) with lines dt 2 title '+1 std', \\\n"
        << "     'aggregate.csv' every ::1 using 1:($2-$3) with lines dt 2 title '-1 std'\n"
        << "set output 'accuracy_vs_bytes.png'\n"
        << "set xlabel 'cumulative uplink bytes'\n"
        << "plot 'aggregate.csv' every ::1 using 4:2 with lines lw 2 title 'mean'\n";
    return out.str();
}

std::uint64_t artifact_hash(const fs::path& path) {
    const std::string bytes = read_bytes(path);
    return fnv1a64(bytes.data(), bytes.size());
}

void write_manifest(const fs::path& dir, std::vector<std::string> files) {
    std::sort(files.begin(), files.end());
    std::ostringstream out;
    out << "# artifact manifest: fnv1a64 hash, filename\n";
    for (const std::string& f : files) {
        out << std::hex << std::setw(16) << std::setfill('0') << artifact_hash(dir / f)
            << std::dec << "  " << f << '\n';
    }
    write_text(dir / "manifest.txt", out.str());
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                c == '_')
                   ? c
                   : '_';
    return out;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const fs::path out_dir(cfg.out);
    ensure_writable(out_dir);

    ExperimentSummary summary;
    summary.seeds = cfg.seed_list();

    std::vector<Vec> acc_per_round;   // [seed][round]
    std::vector<Vec> bytes_up_cum;    // [seed][round]
    const auto start = std::chrono::steady_clock::now();
    for (std::uint64_t seed : summary.seeds) {
        RunResult r = run_federation(cfg, seed);

        const std::string csv_name = "metrics_seed" + std::to_string(seed) + ".csv";
        write_text(out_dir / csv_name, metrics_csv(cfg, seed, r));
        summary.files.push_back(csv_name);

        const std::string json_name = "summary_seed" + std::to_string(seed) + ".json";
        write_text(out_dir / json_name, summary_json(cfg, seed, r).dump(2) + "\n");
        summary.files.push_back(json_name);

        Vec acc, cum;
        double run_up = 0.0;
        for (const RoundMetrics& m : r.metrics) {
            acc.push_back(m.test_acc);
            run_up += static_cast<double>(m.bytes_model_up + m.bytes_proto_up);
            cum.push_back(run_up);
        }
        acc_per_round.push_back(std::move(acc));
        bytes_up_cum.push_back(std::move(cum));
        summary.final_accs.push_back(r.final_acc);
        summary.last10_accs.push_back(r.last10_acc);
    }

    const std::size_t T = acc_per_round[0].size();
    summary.mean_acc_per_round.resize(T);
    summary.std_acc_per_round.resize(T);
    Vec mean_bytes(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        Vec col;
        for (const Vec& a : acc_per_round) col.push_back(a[t]);
        summary.mean_acc_per_round[t] = mean_of(col);
        summary.std_acc_per_round[t] = std_of(col);
        double b = 0.0;
        for (const Vec& c : bytes_up_cum) b += c[t];
        mean_bytes[t] = b / static_cast<double>(bytes_up_cum.size());
    }
    summary.mean_final = mean_of(summary.final_accs);
    summary.std_final = std_of(summary.final_accs);
    summary.mean_last10 = mean_of(summary.last10_accs);
    summary.std_last10 = std_of(summary.last10_accs);
    summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    {
        json agg;
        agg["seeds"] = summary.seeds;
        agg["per_round"] = {{"mean_test_acc", summary.mean_acc_per_round},
                            {"std_test_acc", summary.std_acc_per_round},
                            {"mean_cum_uplink_bytes", mean_bytes}};
        agg["final_accuracy"] = {{"mean", summary.mean_final}, {"std", summary.std_final}};
        agg["mean_last10_accuracy"] = {{"mean", summary.mean_last10},
                                       {"std", summary.std_last10}};
        agg["strategy"] = to_string(cfg.strategy.kind);
        write_text(out_dir / "aggregate.json", agg.dump(2) + "\n");
        summary.files.push_back("aggregate.json");
    }
    {
        std::ostringstream csv;
        csv << "round,mean_test_acc,std_test_acc,mean_cum_uplink_bytes\n";
        for (std::size_t t = 0; t < T; ++t)
            csv << t << ',' << num(summary.mean_acc_per_round[t]) << ','
                << num(summary.std_acc_per_round[t]) << ',' << num(mean_bytes[t]) << '\n';
        write_text(out_dir / "aggregate.csv", csv.str());
        summary.files.push_back("aggregate.csv");
    }
    write_text(out_dir / "plot.gp",
               plot_script(to_string(cfg.strategy.kind) + ", " +
                           std::to_string(summary.seeds.size()) + " seeds"));
    summary.files.push_back("plot.gp");

    write_manifest(out_dir, summary.files);
    summary.files.push_back("manifest.txt");
    return summary;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    {
        ExperimentConfig probe = base;
        apply_kv(probe, axis, values[0]);  // unknown axis -> ConfigError here
    }
    const fs::path root(base.out);
    ensure_writable(root);

    std::vector<SweepRow> rows;
    std::vector<std::string> sub_dirs;
    for (const std::string& value : values) {
        ExperimentConfig cfg = base;
        apply_kv(cfg, axis, value);
        const std::string sub = sanitize(axis) + "_" + sanitize(value);
        cfg.out = (root / sub).string();
        ExperimentSummary s = run_experiment(cfg);
        rows.push_back({value, to_string(cfg.strategy.kind), s.mean_final, s.std_final,
                        s.mean_last10});
        sub_dirs.push_back(sub);
    }

    std::ostringstream csv;
    csv << "axis,value,strategy,mean_final_acc,std_final_acc,mean_last10_acc\n";
    for (const SweepRow& r : rows)
        csv << axis << ',' << r.value << ',' << r.strategy << ',' << num(r.mean_final) << ','
            << num(r.std_final) << ',' << num(r.mean_last10) << '\n';
    write_text(root / "sweep.csv", csv.str());

    std::ostringstream gp;
    gp << "# gnuplot script: accuracy vs round for every sweep point\n"
       << "set datafile separator ','\n"
       << "set key bottom right\n"
       << "set grid\n"
       << "set terminal pngcairo size 900,600\n"
       << "set output 'sweep_accuracy.png'\n"
       << "set xlabel 'round'\n"
       << "set ylabel 'test accuracy'\n"
       << "set title '" << axis << " sweep'\n"
       << "plot ";
    for (std::size_t i = 0; i < sub_dirs.size(); ++i) {
        if (i) gp << ", \\\n     ";
        gp << "'" << sub_dirs[i] << "/aggregate.csv' every ::1 using 1:2 with lines lw 2 title '"
           << values[i] << "'";
    }
    gp << '\n';
    write_text(root / "sweep_plot.gp", gp.str());
    write_manifest(root, {"sweep.csv", "sweep_plot.gp"});
    return rows;
}

}  // namespace mmofl
