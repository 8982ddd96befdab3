#include "fedsa/cli/manifest.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fedsa/errors.hpp"

namespace fedsa::cli {

namespace {

using sim::SimConfig;

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
    s = trim(std::move(s));
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

[[noreturn]] void bad_value(const std::string& path, const std::string& value, const char* expected) {
    throw ConfigError(path + ": expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& path, const std::string& v) {
    double x = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end || v.empty()) bad_value(path, v, "a number");
    return x;
}

long long to_int(const std::string& path, const std::string& v) {
    long long x = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end || v.empty()) bad_value(path, v, "an integer");
    return x;
}

std::size_t to_size(const std::string& path, const std::string& v) {
    const auto x = to_int(path, v);
    if (x < 0) bad_value(path, v, "a non-negative integer");
    return static_cast<std::size_t>(x);
}

int to_small_int(const std::string& path, const std::string& v) {
    const auto x = to_int(path, v);
    if (x < INT32_MIN || x > INT32_MAX) bad_value(path, v, "a 32-bit integer");
    return static_cast<int>(x);
}

bool to_bool(const std::string& path, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(path, v, "a boolean");
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <typename Fn>
auto wrap_config_error(const std::string& path, Fn fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

struct Key {
    std::function<void(SimConfig&, const std::string& value, const std::string& path, const std::filesystem::path& base)> set;
    std::function<std::optional<std::string>(const SimConfig&)> get;
};

using Registry = std::vector<std::pair<std::string, Key>>;

template <typename T>
std::optional<std::string> opt_str(const std::optional<T>& v) {
    if (!v) return std::nullopt;
    if constexpr (std::is_floating_point_v<T>) {
        return fmt(*v);
    } else {
        return std::to_string(*v);
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base / p;
}

const Registry& registry() {
    static const Registry reg = [] {
        Registry r;
        auto add = [&r](std::string name, Key k) { r.emplace_back(std::move(name), std::move(k)); };
#define FEDSA_DOUBLE(name, member)                                                                         \
    add(name, {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) { c.member = to_double(p, v); }, \
               [](const SimConfig& c) -> std::optional<std::string> { return fmt(c.member); }})
#define FEDSA_INT(name, member)                                                                               \
    add(name, {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) { c.member = to_small_int(p, v); }, \
               [](const SimConfig& c) -> std::optional<std::string> { return std::to_string(c.member); }})
#define FEDSA_SIZE(name, member)                                                                          \
    add(name, {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) { c.member = to_size(p, v); }, \
               [](const SimConfig& c) -> std::optional<std::string> { return std::to_string(c.member); }})

        add("dataset", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                            if (v == "mnist") c.dataset.kind = sim::DatasetKind::Mnist;
                            else if (v == "synthetic") c.dataset.kind = sim::DatasetKind::Synthetic;
                            else bad_value(p, v, "mnist or synthetic");
                        },
                        [](const SimConfig& c) -> std::optional<std::string> {
                            return c.dataset.kind == sim::DatasetKind::Mnist ? "mnist" : "synthetic";
                        }});
        add("dataset.dir", {[](SimConfig& c, const std::string& v, const std::string&, const std::filesystem::path& base) {
                                c.dataset.mnist_dir = v.empty() ? std::string() : resolve(base, v).string();
                            },
                            [](const SimConfig& c) -> std::optional<std::string> {
                                if (c.dataset.mnist_dir.empty()) return std::nullopt;
                                return c.dataset.mnist_dir;
                            }});
        FEDSA_SIZE("dataset.train_limit", dataset.train_limit);
        FEDSA_SIZE("dataset.test_limit", dataset.test_limit);
        FEDSA_INT("dataset.classes", dataset.n_classes);
        FEDSA_INT("dataset.features", dataset.n_features);
        FEDSA_INT("dataset.train", dataset.n_train);
        FEDSA_INT("dataset.test", dataset.n_test);
        FEDSA_DOUBLE("dataset.separation", dataset.separation);
        add("model.hidden", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                 c.dataset.hidden.clear();
                                 std::stringstream ss(v);
                                 std::string item;
                                 while (std::getline(ss, item, ',')) {
                                     item = trim(item);
                                     if (!item.empty()) c.dataset.hidden.push_back(to_size(p, item));
                                 }
                             },
                             [](const SimConfig& c) -> std::optional<std::string> {
                                 std::string out;
                                 for (std::size_t i = 0; i < c.dataset.hidden.size(); ++i) {
                                     if (i) out += ',';
                                     out += std::to_string(c.dataset.hidden[i]);
                                 }
                                 return out;
                             }});
        add("partition", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                              if (v == "iid") c.partition.kind = sim::PartitionKind::Iid;
                              else if (v == "dirichlet") c.partition.kind = sim::PartitionKind::Dirichlet;
                              else bad_value(p, v, "iid or dirichlet");
                          },
                          [](const SimConfig& c) -> std::optional<std::string> {
                              return c.partition.kind == sim::PartitionKind::Iid ? "iid" : "dirichlet";
                          }});
        FEDSA_DOUBLE("partition.alpha", partition.alpha);
        FEDSA_SIZE("clients", clients);
        FEDSA_SIZE("malicious", malicious);
        FEDSA_DOUBLE("sampling_rate", sampling_rate);
        FEDSA_INT("rounds", rounds);
        FEDSA_DOUBLE("lr", lr);
        FEDSA_INT("batch_size", batch_size);
        FEDSA_INT("local_epochs", local_epochs);
        FEDSA_DOUBLE("target_accuracy", target_accuracy);
        add("seed", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                         std::uint64_t x = 0;
                         auto [q, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                         if (ec != std::errc() || q != v.data() + v.size() || v.empty()) bad_value(p, v, "an unsigned integer");
                         c.seed = x;
                     },
                     [](const SimConfig& c) -> std::optional<std::string> { return std::to_string(c.seed); }});
        add("benign_mode", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                if (v == "train") c.benign_mode = sim::BenignMode::Train;
                                else if (v == "static") c.benign_mode = sim::BenignMode::Static;
                                else bad_value(p, v, "train or static");
                            },
                            [](const SimConfig& c) -> std::optional<std::string> {
                                return c.benign_mode == sim::BenignMode::Train ? "train" : "static";
                            }});
        FEDSA_DOUBLE("init_half_width", init_half_width);
        FEDSA_INT("threads", threads);

        add("agr", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                        c.agr.kind = wrap_config_error(p, [&] { return agr::parse_aggregator(v); });
                    },
                    [](const SimConfig& c) -> std::optional<std::string> { return std::string(agr::to_string(c.agr.kind)); }});
        add("agr.assumed_malicious", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                          c.agr.assumed_malicious = to_size(p, v);
                                      },
                                      [](const SimConfig& c) { return opt_str(c.agr.assumed_malicious); }});
        FEDSA_DOUBLE("agr.norm_bound_tau", agr.norm_bound_tau);
        FEDSA_DOUBLE("agr.cc_tau", agr.cc_tau);
        FEDSA_INT("agr.cc_iters", agr.cc_iters);
        FEDSA_SIZE("agr.dnc_subsample_dim", agr.dnc_subsample_dim);
        FEDSA_DOUBLE("agr.dnc_filter_frac", agr.dnc_filter_frac);
        FEDSA_INT("agr.dnc_iters", agr.dnc_iters);
        add("agr.mkrum_select", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                     c.agr.mkrum_select = to_size(p, v);
                                 },
                                 [](const SimConfig& c) { return opt_str(c.agr.mkrum_select); }});
        add("agr.bulyan_strict", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                      c.agr.bulyan_strict = to_bool(p, v);
                                  },
                                  [](const SimConfig& c) -> std::optional<std::string> {
                                      return c.agr.bulyan_strict ? "true" : "false";
                                  }});
        FEDSA_SIZE("agr.fltrust_root_samples", agr.fltrust_root_samples);

        add("attack", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                           c.attack.kind = wrap_config_error(p, [&] { return sim::parse_attack(v); });
                       },
                       [](const SimConfig& c) -> std::optional<std::string> { return std::string(sim::to_string(c.attack.kind)); }});
        FEDSA_DOUBLE("attack.k", attack.sliding.k);
        FEDSA_DOUBLE("attack.control_gain", attack.sliding.control_gain);
        FEDSA_DOUBLE("attack.dt", attack.sliding.dt);
        FEDSA_DOUBLE("attack.eps_jac", attack.sliding.eps_jac);
        FEDSA_DOUBLE("attack.boundary_layer", attack.sliding.boundary_layer);
        FEDSA_DOUBLE("attack.jitter", attack.sliding.jitter);
        add("attack.jacobian", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                    c.attack.sliding.jacobian_mode = wrap_config_error(p, [&] { return attack::parse_jacobian_mode(v); });
                                },
                                [](const SimConfig& c) -> std::optional<std::string> {
                                    return std::string(attack::to_string(c.attack.sliding.jacobian_mode));
                                }});
        add("attack.theta", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                 c.attack.sliding.theta_mode = wrap_config_error(p, [&] { return attack::parse_theta_mode(v); });
                             },
                             [](const SimConfig& c) -> std::optional<std::string> {
                                 return std::string(attack::to_string(c.attack.sliding.theta_mode));
                             }});
        add("attack.discretization", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                          c.attack.sliding.discretization =
                                              wrap_config_error(p, [&] { return attack::parse_discretization(v); });
                                      },
                                      [](const SimConfig& c) -> std::optional<std::string> {
                                          return std::string(attack::to_string(c.attack.sliding.discretization));
                                      }});
        add("attack.reference_accuracy", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                              c.attack.reference_accuracy = to_double(p, v);
                                          },
                                          [](const SimConfig& c) { return opt_str(c.attack.reference_accuracy); }});
        FEDSA_DOUBLE("attack.surface_init", attack.surface_init);
        add("attack.switch_round", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                        c.attack.switch_round = to_small_int(p, v);
                                    },
                                    [](const SimConfig& c) { return opt_str(c.attack.switch_round); }});
        add("attack.switch_target", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                         c.attack.switch_target = to_double(p, v);
                                     },
                                     [](const SimConfig& c) { return opt_str(c.attack.switch_target); }});
        FEDSA_INT("attack.shadow_rounds", attack.shadow_rounds);
        add("attack.reference_cache",
            {[](SimConfig& c, const std::string& v, const std::string&, const std::filesystem::path& base) {
                 c.attack.reference_cache = v.empty() ? std::string() : resolve(base, v).string();
             },
             [](const SimConfig& c) -> std::optional<std::string> {
                 if (c.attack.reference_cache.empty()) return std::nullopt;
                 return c.attack.reference_cache;
             }});
        add("attack.lie_z", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                 c.attack.lie_z = to_double(p, v);
                             },
                             [](const SimConfig& c) { return opt_str(c.attack.lie_z); }});
        add("attack.perturb", {[](SimConfig& c, const std::string& v, const std::string& p, const auto&) {
                                   c.attack.perturb = wrap_config_error(p, [&] { return attack::parse_perturb_mode(v); });
                               },
                               [](const SimConfig& c) -> std::optional<std::string> {
                                   return c.attack.perturb == attack::PerturbMode::UnitMean ? "unit-mean" : "std";
                               }});
#undef FEDSA_DOUBLE
#undef FEDSA_INT
#undef FEDSA_SIZE
        return r;
    }();
    return reg;
}

const Key* find_key(const std::string& name) {
    for (const auto& [n, k] : registry()) {
        if (n == name) return &k;
    }
    return nullptr;
}

using boost::property_tree::ptree;

// Section headers in file order; read_ini's own duplicate message carries no id.
void check_duplicate_ids(const std::string& text) {
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.size() < 2 || line.front() != '[' || line.back() != ']') continue;
        const std::string name = trim(line.substr(1, line.size() - 2));
        const std::string prefix = "experiment.";
        if (name.rfind(prefix, 0) == 0 && !seen.insert(name.substr(prefix.size())).second) {
            throw ConfigError("duplicate experiment id '" + name.substr(prefix.size()) + "'");
        }
        if (name.rfind(prefix, 0) != 0 && !seen.insert("[" + name + "]").second) {
            throw ConfigError("duplicate section '" + name + "'");
        }
    }
}

void apply_section(SimConfig& cfg, const ptree& section, const std::string& section_path,
                   const std::filesystem::path& base, std::set<std::string>& seen) {
    for (const auto& [key, child] : section) {
        const std::string path = section_path + "." + key;
        if (!child.empty()) throw ConfigError(path + ": nested keys are not supported");
        const Key* k = find_key(key);
        if (k == nullptr) throw ConfigError(path + ": unknown key");
        k->set(cfg, unquote(child.data()), path, base);
        seen.insert(key);
    }
}

}  // namespace

ExperimentManifest parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
    check_duplicate_ids(text);
    ptree root;
    try {
        std::istringstream in(text);
        boost::property_tree::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }

    ExperimentManifest m;
    m.output_dir = base_dir / "results";
    const ptree* defaults = nullptr;
    std::vector<std::pair<std::string, const ptree*>> experiments;
    for (const auto& [name, section] : root) {
        if (section.empty() && !section.data().empty()) throw ConfigError(name + ": key outside of any section");
        if (name == "manifest") {
            for (const auto& [key, child] : section) {
                if (key == "output_dir") {
                    m.output_dir = resolve(base_dir, unquote(child.data()));
                } else {
                    throw ConfigError("manifest." + key + ": unknown key");
                }
            }
        } else if (name == "defaults") {
            defaults = &section;
        } else if (name.rfind("experiment.", 0) == 0 && name.size() > 11) {
            experiments.emplace_back(name.substr(11), &section);
        } else {
            throw ConfigError(name + ": unknown section");
        }
    }

    for (const auto& [id, section] : experiments) {
        SimConfig cfg;
        cfg.id = id;
        std::set<std::string> seen;
        if (defaults != nullptr) apply_section(cfg, *defaults, "defaults", base_dir, seen);
        apply_section(cfg, *section, "experiment." + id, base_dir, seen);
        for (const char* required : {"dataset", "rounds", "agr", "attack"}) {
            if (!seen.count(required)) throw ConfigError("experiment." + id + "." + required + ": missing required key");
        }
        cfg.validate();
        m.experiments.push_back(std::move(cfg));
    }
    return m;
}

ExperimentManifest parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config_text(buf.str(), path.parent_path().empty() ? "." : path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<std::pair<std::string, std::string>> config_to_keys(const sim::SimConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, key] : registry()) {
        if (auto v = key.get(cfg)) out.emplace_back(name, *v);
    }
    return out;
}

}  // namespace fedsa::cli
