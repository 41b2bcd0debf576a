#include "misf/config.hpp"

#include <fstream>
#include <sstream>

#include "misf/model.hpp"

namespace misf {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' wants true/false, got '" + v + "'");
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "variant") {
            parse_variant(value);  // validate
            cfg.variant = value;
        } else if (key == "preset") {
            parse_preset(value);
            cfg.preset = value;
        } else if (key == "lr")
            cfg.lr = std::stod(value);
        else if (key == "beta1")
            cfg.beta1 = std::stod(value);
        else if (key == "beta2")
            cfg.beta2 = std::stod(value);
        else if (key == "eps")
            cfg.eps = std::stod(value);
        else if (key == "batch_size")
            cfg.batch_size = std::stoi(value);
        else if (key == "max_iters")
            cfg.max_iters = std::stoll(value);
        else if (key == "seed")
            cfg.seed = std::stoull(value);
        else if (key == "checkpoint_every")
            cfg.checkpoint_every = std::stoll(value);
        else if (key == "precision") {
            if (value != "f32" && value != "f64")
                throw ConfigError("config: precision must be f32 or f64");
            cfg.precision = value;
        } else if (key == "lambda_l1")
            cfg.weights.l1 = std::stod(value);
        else if (key == "lambda_gan")
            cfg.weights.gan = std::stod(value);
        else if (key == "lambda_perc")
            cfg.weights.perc = std::stod(value);
        else if (key == "lambda_style")
            cfg.weights.style = std::stod(value);
        else if (key == "manifest")
            cfg.manifest = value;
        else if (key == "fixture_count")
            cfg.fixture_count = std::stoi(value);
        else if (key == "bucket") {
            parse_bucket(value);
            cfg.bucket = value;
        } else if (key == "fx_seed")
            cfg.fx_seed = std::stoull(value);
        else if (key == "masked_l1")
            cfg.masked_l1 = parse_bool(value, key);
        else
            throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("config: value out of range for key '" + key + "'");
    }
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected 'key = value' at line " + std::to_string(lineno));
        apply_config_line(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    check(cfg.lr > 0, "config: lr must be positive");
    check(cfg.batch_size >= 0, "config: batch_size must be nonnegative");
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "variant = " << cfg.variant << "\n"
       << "preset = " << cfg.preset << "\n"
       << "lr = " << cfg.lr << "\n"
       << "beta1 = " << cfg.beta1 << "\n"
       << "beta2 = " << cfg.beta2 << "\n"
       << "eps = " << cfg.eps << "\n"
       << "batch_size = " << cfg.batch_size << "\n"
       << "max_iters = " << cfg.max_iters << "\n"
       << "seed = " << cfg.seed << "\n"
       << "checkpoint_every = " << cfg.checkpoint_every << "\n"
       << "precision = " << cfg.precision << "\n"
       << "lambda_l1 = " << cfg.weights.l1 << "\n"
       << "lambda_gan = " << cfg.weights.gan << "\n"
       << "lambda_perc = " << cfg.weights.perc << "\n"
       << "lambda_style = " << cfg.weights.style << "\n"
       << "manifest = " << cfg.manifest << "\n"
       << "fixture_count = " << cfg.fixture_count << "\n"
       << "bucket = " << cfg.bucket << "\n"
       << "fx_seed = " << cfg.fx_seed << "\n"
       << "masked_l1 = " << (cfg.masked_l1 ? "true" : "false") << "\n";
    return os.str();
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a(serialize_config(cfg)); }

}  // namespace misf
