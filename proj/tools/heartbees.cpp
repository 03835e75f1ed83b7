#include <atomic>
#include <chrono>
#include <csignal>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "heartbees/cli.hpp"
#include "heartbees/hash.hpp"
#include "heartbees/server.hpp"
#include "heartbees/session.hpp"

namespace fs = std::filesystem;
using namespace heartbees;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

// Writes to a temporary sibling and renames on success, so failed runs leave
// no partial output. "-" means stdout.
class OutputFile {
public:
    explicit OutputFile(std::string path) : path_(std::move(path)) {
        if (path_ == "-") return;
        tmp_ = path_ + ".tmp";
        file_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!file_) throw cli::DataError("cannot write " + path_);
    }
    ~OutputFile() {
        if (!committed_ && !tmp_.empty()) {
            file_.close();
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }
    std::ostream& stream() { return path_ == "-" ? std::cout : static_cast<std::ostream&>(file_); }
    void commit() {
        if (path_ == "-") {
            std::cout.flush();
            return;
        }
        file_.close();
        if (!file_) throw cli::DataError("failed writing " + path_);
        std::error_code ec;
        fs::rename(tmp_, path_, ec);
        if (ec) throw cli::DataError("cannot write " + path_ + ": " + ec.message());
        committed_ = true;
    }

private:
    std::string path_;
    std::string tmp_;
    std::ofstream file_;
    bool committed_{false};
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw cli::DataError("cannot open " + path);
    return in;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heartbees: emotion-driven boids flock, RR-interval classification and rendering"};
    app.require_subcommand(1);
    app.footer("\n" + cli::motion_table_help());

    auto emotion_check = CLI::Validator(
        [](std::string& s) -> std::string {
            try {
                parse_emotion(s);
                return {};
            } catch (const std::exception& e) {
                return e.what();
            }
        },
        "EMOTION");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the flock for one emotion and write a trajectory");
    std::string sim_emotion = "joy", sim_bounds = "800x600", sim_out = "-";
    std::uint64_t sim_frames = 100, sim_seed = 1;
    std::size_t sim_n = 100;
    sim->add_option("--emotion", sim_emotion, "Emotion preset")->check(emotion_check);
    sim->add_option("--frames", sim_frames, "Number of steps (one record each)");
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--n", sim_n, "Flock size")->check(CLI::PositiveNumber);
    sim->add_option("--bounds", sim_bounds, "World size WIDTHxHEIGHT");
    sim->add_option("--out", sim_out, "Output trajectory file ('-' for stdout)");

    // render
    auto* ren = app.add_subcommand("render", "Render a trajectory to PPM frames");
    std::string ren_traj, ren_palette = "warm", ren_bg = "dark", ren_size = "800x600", ren_outdir = "frames";
    int ren_len = 10, ren_width = 3;
    ren->add_option("--traj", ren_traj, "Trajectory file")->required();
    ren->add_option("--stroke-length", ren_len, "Trail length 0-100 (100 keeps all)")->check(CLI::Range(0, 100));
    ren->add_option("--stroke-width", ren_width, "Stroke width in pixels")->check(CLI::PositiveNumber);
    ren->add_option("--palette", ren_palette, "warm | cold | mixed")->check(CLI::IsMember({"warm", "cold", "mixed"}));
    ren->add_option("--bg", ren_bg, "dark | bright")->check(CLI::IsMember({"dark", "bright"}));
    ren->add_option("--size", ren_size, "Frame size WIDTHxHEIGHT in pixels");
    ren->add_option("--outdir", ren_outdir, "Directory for frame_%06d.ppm");

    // classify
    auto* cls = app.add_subcommand("classify", "Classify RR-interval windows into emotions");
    std::string cls_rr, cls_out = "-";
    double cls_window = 60.0, cls_hop = 5.0;
    cls->add_option("--rr", cls_rr, "CSV with header person_id,timestamp_ms,rr_ms")->required();
    cls->add_option("--window", cls_window, "Window length in seconds")->check(CLI::PositiveNumber);
    cls->add_option("--hop", cls_hop, "Window hop in seconds")->check(CLI::PositiveNumber);
    cls->add_option("--out", cls_out, "Assessment output ('-' for stdout)");

    // serve
    auto* srv = app.add_subcommand("serve", "Run the live session service");
    int srv_port = 8765;
    double srv_rate = 30.0;
    std::uint64_t srv_seed = 1;
    std::size_t srv_n = 100;
    std::string srv_emotion = "joy", srv_log, srv_out;
    srv->add_option("--port", srv_port, "TCP port (0 picks a free one)")->envname("HEARTBEES_PORT")->check(CLI::Range(0, 65535));
    srv->add_option("--tick-rate", srv_rate, "Simulation steps per second")->envname("HEARTBEES_TICK_RATE");
    srv->add_option("--seed", srv_seed, "Random seed")->envname("HEARTBEES_SEED");
    srv->add_option("--emotion", srv_emotion, "Initial emotion")->envname("HEARTBEES_EMOTION")->check(emotion_check);
    srv->add_option("--n", srv_n, "Flock size")->check(CLI::PositiveNumber);
    srv->add_option("--record-log", srv_log, "Write the inbound message log here (for replay)");
    srv->add_option("--record-out", srv_out, "Write every outbound message here");

    // replay
    auto* rep = app.add_subcommand("replay", "Re-run a recorded inbound log and dump outbound messages");
    std::string rep_log, rep_out = "-";
    std::optional<std::uint64_t> rep_seed;
    std::uint64_t rep_ticks = 300;
    rep->add_option("--log", rep_log, "Recorded inbound log")->required();
    rep->add_option("--seed", rep_seed, "Override the recorded seed");
    rep->add_option("--ticks", rep_ticks, "Minimum steps when the log has no end marker");
    rep->add_option("--out", rep_out, "Outbound dump ('-' for stdout)");

    // normalize
    auto* nor = app.add_subcommand("normalize", "Column-normalise an 8x8 response count matrix");
    std::string nor_in, nor_out = "-";
    nor->add_option("--in", nor_in, "Counts CSV (labelled rows and columns)")->required();
    nor->add_option("--out", nor_out, "Normalised CSV ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? cli::kSuccess : cli::kUsageError;
    }

    try {
        if (*sim) {
            cli::SimulateOptions o;
            o.emotion = parse_emotion(sim_emotion);
            o.frames = sim_frames;
            o.seed = sim_seed;
            o.flock_size = sim_n;
            const auto b = cli::parse_size(sim_bounds);
            o.bounds = {b.width, b.height};
            OutputFile out(sim_out);
            cli::simulate(o, out.stream());
            out.commit();
        } else if (*ren) {
            cli::RenderOptions o;
            o.aesthetics = {ren_len, ren_width, parse_background(ren_bg), parse_palette(ren_palette)};
            const auto sz = cli::parse_size(ren_size);
            o.width = static_cast<int>(sz.width);
            o.height = static_cast<int>(sz.height);
            if (o.width < 1 || o.height < 1) throw cli::UsageError("frame size must be at least 1x1");
            o.outdir = ren_outdir;
            auto in = open_input(ren_traj);
            const auto n = cli::render(o, in);
            std::cerr << "wrote " << n << " frame(s) to " << ren_outdir << "\n";
        } else if (*cls) {
            cli::ClassifyOptions o;
            o.window_ms = static_cast<std::int64_t>(std::llround(cls_window * 1000.0));
            o.hop_ms = static_cast<std::int64_t>(std::llround(cls_hop * 1000.0));
            auto in = open_input(cls_rr);
            std::ostringstream buf;
            const auto s = cli::classify(o, in, buf);
            OutputFile out(cls_out);
            out.stream() << buf.str();
            out.commit();
            std::cerr << s.windows << " window(s), " << s.accepted << " sample(s) accepted, " << s.dropped
                      << " dropped\n";
        } else if (*srv) {
            SessionOptions o;
            o.emotion = parse_emotion(srv_emotion);
            o.tick_rate = srv_rate;
            o.seed = srv_seed;
            o.flock_size = srv_n;
            const auto bad = o.violations();
            if (!bad.empty()) throw cli::UsageError(bad.front());
            std::unique_ptr<std::ofstream> log_file, out_file;
            if (!srv_log.empty()) {
                log_file = std::make_unique<std::ofstream>(srv_log, std::ios::binary | std::ios::trunc);
                if (!*log_file) throw cli::DataError("cannot write " + srv_log);
            }
            if (!srv_out.empty()) {
                out_file = std::make_unique<std::ofstream>(srv_out, std::ios::binary | std::ios::trunc);
                if (!*out_file) throw cli::DataError("cannot write " + srv_out);
            }
            struct sigaction sa{};
            sa.sa_handler = on_signal;
            sigemptyset(&sa.sa_mask);
            ::sigaction(SIGINT, &sa, nullptr);
            ::sigaction(SIGTERM, &sa, nullptr);

            Server server(o, static_cast<std::uint16_t>(srv_port), log_file.get(), out_file.get());
            try {
                server.start();
            } catch (const ServerError& e) {
                std::cerr << "error: " << e.what() << "\n";
                return cli::kDataError;
            }
            std::cout << "listening on port " << server.port() << " (emotion " << name_of(o.emotion) << ", V="
                      << config_for(o.emotion).max_speed << ")" << std::endl;
            while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(20));
            server.stop();
            std::cout << "stopped after " << server.ticks() << " ticks" << std::endl;
        } else if (*rep) {
            auto in = open_input(rep_log);
            InboundLog log;
            try {
                log = read_inbound_log(in);
            } catch (const LogParseError& e) {
                throw cli::DataError(e.what());
            }
            SessionOptions o = log.header.value_or(SessionOptions{});
            if (rep_seed) o.seed = *rep_seed;
            OutputFile out(rep_out);
            Fnv1a hash;
            replay(log, o, rep_ticks, [&](const std::string& line) {
                out.stream() << line << '\n';
                hash.update(line);
                hash.update("\n");
            });
            out.commit();
            std::cerr << "fnv1a " << hash.hex() << "\n";
        } else if (*nor) {
            auto in = open_input(nor_in);
            std::ostringstream buf;
            cli::normalize(in, buf, std::cerr);
            OutputFile out(nor_out);
            out.stream() << buf.str();
            out.commit();
        }
    } catch (const cli::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsageError;
    } catch (const UnknownEmotion& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsageError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kDataError;
    }
    return cli::kSuccess;
}
