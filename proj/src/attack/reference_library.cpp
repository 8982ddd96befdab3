#include "fedsa/attack/reference_library.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fedsa/errors.hpp"

namespace fedsa::attack {

static_assert(std::endian::native == std::endian::little, "checkpoint files are written in host order");

std::size_t ReferenceLibrary::closest(double target) const {
    if (checkpoints.empty()) throw ConfigError("reference library is empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        if (std::abs(checkpoints[i].accuracy - target) < std::abs(checkpoints[best].accuracy - target)) best = i;
    }
    return best;
}

void ReferenceLibrary::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
    manifest << std::setprecision(17);
    for (const auto& cp : checkpoints) {
        const auto path = dir / (cp.id + ".bin");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(cp.params.data()),
                  static_cast<std::streamsize>(cp.params.size() * sizeof(double)));
        manifest << cp.id << ' ' << cp.accuracy << ' ' << cp.params.size() << '\n';
    }
}

ReferenceLibrary ReferenceLibrary::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw ConfigError("cannot open " + manifest_path.string());
    ReferenceLibrary lib;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        Checkpoint cp;
        std::size_t r = 0;
        if (!(fields >> cp.id >> cp.accuracy >> r)) {
            throw ConfigError(manifest_path.string() + ":" + std::to_string(line_no) + ": expected '<id> <accuracy> <r>'");
        }
        const auto path = dir / (cp.id + ".bin");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open " + path.string());
        cp.params.resize(r);
        in.read(reinterpret_cast<char*>(cp.params.data()), static_cast<std::streamsize>(r * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != r * sizeof(double)) {
            throw FormatError(path.string(), static_cast<std::uint64_t>(in.gcount()), "truncated checkpoint");
        }
        lib.checkpoints.push_back(std::move(cp));
    }
    if (lib.checkpoints.empty()) throw ConfigError("reference library at " + dir.string() + " has no checkpoints");
    return lib;
}

OffsetCalibration calibrate_C(const ReferenceLibrary& lib, std::span<const double> w_ref, double target_accuracy,
                              double k) {
    if (lib.checkpoints.empty()) throw ConfigError("calibrate_C: empty reference library");
    OffsetCalibration cal;
    cal.checkpoint = lib.closest(target_accuracy);
    const auto& cp = lib.checkpoints[cal.checkpoint];
    require_same_size(cp.params.size(), w_ref.size(), "calibrate_C");
    if (std::abs(cp.accuracy - target_accuracy) > 0.02) {
        std::ostringstream msg;
        msg << "no checkpoint within 2 points of target " << target_accuracy << "; using " << cp.id << " ("
            << cp.accuracy << ")";
        cal.warning = msg.str();
    }
    cal.C = sub(cp.params, w_ref);
    for (auto& v : cal.C) v *= k;
    return cal;
}

}  // namespace fedsa::attack
