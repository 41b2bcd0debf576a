#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "misf/gradcheck.hpp"
#include "misf/train.hpp"

namespace fs = std::filesystem;
using namespace misf;

namespace {

struct CheckpointHeader {
    std::string variant = "misf";
    std::string preset = "misf-tiny";
    std::string precision = "f32";
};

CheckpointHeader read_checkpoint_header(const std::string& dir) {
    std::ifstream f(dir + "/checkpoint.txt");
    if (!f) throw IoError("checkpoint: cannot open manifest in " + dir);
    CheckpointHeader h;
    std::string key, eq, val;
    while (f >> key) {
        if (key == "param") {
            std::string rest;
            std::getline(f, rest);
            continue;
        }
        f >> eq >> val;
        if (key == "variant") h.variant = val;
        if (key == "preset") h.preset = val;
        if (key == "precision") h.precision = val;
    }
    return h;
}

void apply_seed_env(RunConfig& cfg) {
    if (const char* s = std::getenv("MISF_SEED")) cfg.seed = std::stoull(s);
}

template <typename T>
Tensor<T> load_mask_file(const std::string& path, int64_t h, int64_t w) {
    Tensor<T> img = load_image<T>(path);
    const Shape s = img.shape();
    check(s.h == h && s.w == w, "mask " + path + " is " + s.str() + ", image wants " +
                                    std::to_string(h) + "x" + std::to_string(w));
    Tensor<T> m({1, 1, h, w});
    const int64_t hw = h * w;
    for (int64_t i = 0; i < hw; ++i) m[i] = img[i] > T(0.5) ? T(1) : T(0);
    return m;
}

template <typename T>
int run_train(RunConfig cfg, const std::string& out_dir, const std::string& resume,
              const std::string& fx_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream c(out_dir + "/config.txt");
        c << serialize_config(cfg);
        c << "config_hash = " << config_hash(cfg) << "\n";
    }
    std::cout << "config hash: " << config_hash(cfg) << "\n";

    Dataset<T> data =
        cfg.manifest.empty()
            ? Dataset<T>::fixture(cfg.fixture_count, parse_preset(cfg.preset).image_size,
                                  cfg.seed, parse_bucket(cfg.bucket))
            : Dataset<T>::from_manifest(load_manifest(cfg.manifest), /*train_split=*/true);

    Trainer<T> trainer(cfg, data);
    if (!fx_dir.empty()) trainer.fx().load(fx_dir);
    if (!resume.empty()) trainer.resume(resume);

    std::ofstream csv(out_dir + "/metrics.csv", trainer.iter() > 0 ? std::ios::app : std::ios::out);
    if (trainer.iter() == 0) csv << train_csv_header() << "\n";

    const int64_t every = cfg.checkpoint_every;
    trainer.run(
        [&](const TrainRow& row) {
            csv << train_csv_row(row) << "\n";
            if (every > 0 && row.iter % every == 0) trainer.save(out_dir + "/checkpoint");
        },
        out_dir + "/nan-dump");
    trainer.save(out_dir + "/checkpoint");
    std::cout << "trained " << trainer.iter() << " iterations, checkpoint in " << out_dir
              << "/checkpoint\n";
    return 0;
}

template <typename T>
int run_inpaint(const std::string& ckpt, const std::string& input, const std::string& mask_path,
                const std::string& out, const std::string& dump_kernels,
                const std::string& dump_features) {
    CheckpointHeader h = read_checkpoint_header(ckpt);
    RunConfig cfg;
    cfg.variant = h.variant;
    cfg.preset = h.preset;
    cfg.precision = h.precision;
    MisfModel<T> model(parse_preset(h.preset), parse_variant(h.variant), 0);
    load_checkpoint<T>(ckpt, model, nullptr, nullptr, cfg);

    Tensor<T> image = load_image<T>(input);
    const Shape s = image.shape();
    check(s.h % 4 == 0 && s.w % 4 == 0, "inpaint: image dims must be divisible by 4, got " + s.str());
    Tensor<T> mask = load_mask_file<T>(mask_path, s.h, s.w);
    Tensor<T> corrupted = corrupt(image, mask);

    Tape<T> t;
    auto fw = model.forward(t, corrupted, mask, /*frozen=*/true);
    save_image(t.value(fw.out), out);
    if (!dump_kernels.empty()) {
        fs::create_directories(dump_kernels);
        if (fw.k.valid()) write_mtf1(dump_kernels + "/k_image.mtf", t.value(fw.k));
        if (fw.k3.valid()) write_mtf1(dump_kernels + "/k3_feature.mtf", t.value(fw.k3));
    }
    if (!dump_features.empty()) {
        fs::create_directories(dump_features);
        write_mtf1(dump_features + "/f3.mtf", t.value(fw.f3));
        if (fw.f3hat.valid()) write_mtf1(dump_features + "/f3hat.mtf", t.value(fw.f3hat));
    }
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_eval(const std::string& results, const std::string& gt, const std::string& masks,
             const std::string& out, bool json) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(results))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw IoError("eval: no result files in " + results);

    MetricReport rep;
    for (const auto& name : names) {
        Tensor<double> pred = load_image<double>(results + "/" + name);
        Tensor<double> ref = load_image<double>(gt + "/" + name);
        MetricRow r;
        r.id = name;
        r.psnr_db = psnr(pred, ref);
        r.ssim = ssim(pred, ref);
        r.l1_pct = l1_pct(pred, ref);
        r.variant = "eval";
        if (!masks.empty()) {
            Tensor<double> m = load_mask_file<double>(masks + "/" + name, ref.shape().h,
                                                      ref.shape().w);
            double ratio = 0;
            for (int64_t i = 0; i < m.size(); ++i) ratio += m[i];
            ratio /= static_cast<double>(m.size());
            r.bucket = ratio < 0.2 ? "0-20" : (ratio < 0.4 ? "20-40" : "40-60");
        } else {
            r.bucket = "all";
        }
        rep.rows.push_back(std::move(r));
    }
    emit_report_csv(rep, out);
    if (json) {
        std::string jpath = out;
        size_t dot = jpath.find_last_of('.');
        jpath = (dot == std::string::npos ? jpath : jpath.substr(0, dot)) + ".json";
        emit_report_json(rep, jpath);
    }
    std::cout << "wrote " << out << " (" << rep.rows.size() << " rows)\n";
    return 0;
}

int run_mask_gen(const std::string& bucket, uint64_t seed, const std::string& out, int count,
                 int size) {
    fs::create_directories(out);
    MaskSpec spec;
    spec.bucket = parse_bucket(bucket);
    for (int i = 0; i < count; ++i) {
        spec.seed = seed + static_cast<uint64_t>(i);
        auto m = generate_mask(spec, size, size);
        RawImage img;
        img.width = size;
        img.height = size;
        img.rgb.resize(static_cast<size_t>(size) * size * 3);
        for (size_t p = 0; p < m.size(); ++p) {
            uint8_t v = m[p] ? 255 : 0;
            img.rgb[p * 3] = img.rgb[p * 3 + 1] = img.rgb[p * 3 + 2] = v;
        }
        char name[64];
        std::snprintf(name, sizeof(name), "mask_%05d.png", i);
        save_image_bytes(out + "/" + name, img);
        std::cout << name << " ratio " << mask_ratio(m) << "\n";
    }
    return 0;
}

int run_gradcheck(double tol) {
    auto results = run_all_grad_checks();
    bool all_ok = true;
    for (const auto& r : results) {
        bool ok = r.ok(tol);
        all_ok = all_ok && ok;
        std::printf("%-28s max_rel_err %.3e probes %3lld %s\n", r.name.c_str(), r.max_rel_err,
                    static_cast<long long>(r.probes), ok ? "PASS" : "FAIL");
    }
    return all_ok ? 0 : 1;
}

template <typename T>
int run_feature_sim(const std::string& ckpt, int count, uint64_t seed, const std::string& bucket) {
    CheckpointHeader h = read_checkpoint_header(ckpt);
    RunConfig cfg;
    cfg.variant = h.variant;
    cfg.preset = h.preset;
    cfg.precision = h.precision;
    MisfModel<T> model(parse_preset(h.preset), parse_variant(h.variant), 0);
    load_checkpoint<T>(ckpt, model, nullptr, nullptr, cfg);

    Dataset<T> data = Dataset<T>::fixture(count, parse_preset(h.preset).image_size, seed,
                                          parse_bucket(bucket));
    int improved = 0;
    for (int64_t i = 0; i < data.size(); ++i) {
        ImageSample<T> s = data.sample(i);
        double pre = feature_similarity(model, s.corrupted, s.clean, s.mask, FilterSite::PreFilter);
        double post =
            feature_similarity(model, s.corrupted, s.clean, s.mask, FilterSite::PostFilter);
        if (post >= pre) ++improved;
        std::printf("sample %2lld pre %.6f post %.6f %s\n", static_cast<long long>(i), pre, post,
                    post >= pre ? "+" : "-");
    }
    std::printf("post-filter similarity >= pre-filter on %d/%lld samples\n", improved,
                static_cast<long long>(data.size()));
    return 0;
}

template <typename T>
int run_demo_recurrent(const std::string& ckpt, const std::string& input,
                       const std::string& mask_path, int iters, const std::string& out) {
    CheckpointHeader h = read_checkpoint_header(ckpt);
    RunConfig cfg;
    cfg.variant = h.variant;
    cfg.preset = h.preset;
    cfg.precision = h.precision;
    MisfModel<T> model(parse_preset(h.preset), parse_variant(h.variant), 0);
    load_checkpoint<T>(ckpt, model, nullptr, nullptr, cfg);

    Tensor<T> image = load_image<T>(input);
    const Shape s = image.shape();
    Tensor<T> mask = load_mask_file<T>(mask_path, s.h, s.w);
    Tensor<T> corrupted = corrupt(image, mask);

    auto res = recurrent_filter(corrupted, mask, model, iters);
    fs::create_directories(out);
    for (size_t i = 0; i < res.frames.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "frame_%03zu.png", i);
        save_image(res.frames[i], out + "/" + name);
    }
    std::ofstream front(out + "/fill_front.csv");
    front << "iter,newly_reachable\n";
    for (size_t i = 0; i < res.fill_front.size(); ++i)
        front << (i + 1) << "," << res.fill_front[i] << "\n";
    std::cout << "wrote " << res.frames.size() << " frames to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MISF predictive-filtering inpainting"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    std::string t_config, t_variant, t_preset, t_out = "run", t_resume, t_fx;
    int64_t t_iters = -1;
    int t_batch = -1;
    uint64_t t_seed = 0;
    bool t_seed_set = false, t_masked_l1 = false, t_l1_only = false;
    double t_lr = -1;
    train->add_option("--config", t_config, "key = value config file");
    train->add_option("--variant", t_variant, "img-filter|sem-filter|misf|en-decoder|en-decoder-filter");
    train->add_option("--preset", t_preset, "full-256 or misf-tiny");
    train->add_option("--iters", t_iters, "max training iterations");
    train->add_option("--batch-size", t_batch, "batch size override");
    train->add_option("--seed", t_seed, "training seed")->each([&](const std::string&) { t_seed_set = true; });
    train->add_option("--lr", t_lr, "learning rate");
    train->add_option("--out", t_out, "output directory");
    train->add_option("--resume", t_resume, "checkpoint directory to resume from");
    train->add_option("--fx-weights", t_fx, "frozen feature extractor weight directory");
    train->add_flag("--masked-l1", t_masked_l1, "restrict the L1 term to hole pixels");
    train->add_flag("--l1-only", t_l1_only, "set loss weights to (1,0,0,0)");

    // inpaint
    auto* inpaint = app.add_subcommand("inpaint", "Complete a masked image");
    std::string i_ckpt, i_input, i_mask, i_out = "inpainted.png", i_dumpk, i_dumpf;
    inpaint->add_option("--checkpoint", i_ckpt)->required();
    inpaint->add_option("--input", i_input)->required();
    inpaint->add_option("--mask", i_mask)->required();
    inpaint->add_option("--out", i_out);
    inpaint->add_option("--dump-kernels", i_dumpk, "directory for predicted kernel field dumps");
    inpaint->add_option("--dump-features", i_dumpf, "directory for feature map dumps");

    // eval
    auto* eval = app.add_subcommand("eval", "Score completed images against ground truth");
    std::string e_results, e_gt, e_masks, e_out = "report.csv";
    bool e_json = false;
    eval->add_option("--results", e_results)->required();
    eval->add_option("--gt", e_gt)->required();
    eval->add_option("--masks", e_masks, "mask directory, used to bucket rows");
    eval->add_option("--out", e_out);
    eval->add_flag("--json", e_json, "also emit a json report");

    // mask-gen
    auto* maskgen = app.add_subcommand("mask-gen", "Generate free-form masks");
    std::string m_bucket = "20-40", m_out = "masks";
    uint64_t m_seed = 0;
    int m_count = 1, m_size = 256;
    maskgen->add_option("--bucket", m_bucket, "0-20, 20-40 or 40-60");
    maskgen->add_option("--seed", m_seed);
    maskgen->add_option("--out", m_out);
    maskgen->add_option("--count", m_count);
    maskgen->add_option("--size", m_size);

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    double g_tol = 1e-4;
    gradcheck->add_option("--tol", g_tol, "max relative error tolerance");

    // feature-sim
    auto* featsim = app.add_subcommand("feature-sim", "Pre- vs post-filter feature similarity");
    std::string f_ckpt, f_bucket = "20-40";
    int f_count = 20;
    uint64_t f_seed = 1000;
    featsim->add_option("--checkpoint", f_ckpt)->required();
    featsim->add_option("--count", f_count);
    featsim->add_option("--seed", f_seed, "fixture seed for held-out samples");
    featsim->add_option("--bucket", f_bucket);

    // demo-recurrent
    auto* recur = app.add_subcommand("demo-recurrent", "Recurrent filtering frame sequence");
    std::string r_ckpt, r_input, r_mask, r_out = "recurrent";
    int r_iters = 5;
    recur->add_option("--checkpoint", r_ckpt)->required();
    recur->add_option("--input", r_input)->required();
    recur->add_option("--mask", r_mask)->required();
    recur->add_option("--iters", r_iters);
    recur->add_option("--out", r_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            RunConfig cfg = t_config.empty() ? RunConfig{} : parse_run_config(t_config);
            if (!t_variant.empty()) apply_config_line(cfg, "variant", t_variant);
            if (!t_preset.empty()) apply_config_line(cfg, "preset", t_preset);
            if (t_iters >= 0) cfg.max_iters = t_iters;
            if (t_batch >= 0) cfg.batch_size = t_batch;
            if (t_seed_set) cfg.seed = t_seed;
            if (t_lr > 0) cfg.lr = t_lr;
            if (t_masked_l1) cfg.masked_l1 = true;
            if (t_l1_only) cfg.weights = {1.0, 0.0, 0.0, 0.0};
            apply_seed_env(cfg);
            return cfg.precision == "f64" ? run_train<double>(cfg, t_out, t_resume, t_fx)
                                          : run_train<float>(cfg, t_out, t_resume, t_fx);
        }
        if (inpaint->parsed()) {
            CheckpointHeader h = read_checkpoint_header(i_ckpt);
            return h.precision == "f64"
                       ? run_inpaint<double>(i_ckpt, i_input, i_mask, i_out, i_dumpk, i_dumpf)
                       : run_inpaint<float>(i_ckpt, i_input, i_mask, i_out, i_dumpk, i_dumpf);
        }
        if (eval->parsed()) return run_eval(e_results, e_gt, e_masks, e_out, e_json);
        if (maskgen->parsed()) return run_mask_gen(m_bucket, m_seed, m_out, m_count, m_size);
        if (gradcheck->parsed()) return run_gradcheck(g_tol);
        if (featsim->parsed()) {
            CheckpointHeader h = read_checkpoint_header(f_ckpt);
            return h.precision == "f64" ? run_feature_sim<double>(f_ckpt, f_count, f_seed, f_bucket)
                                        : run_feature_sim<float>(f_ckpt, f_count, f_seed, f_bucket);
        }
        if (recur->parsed()) {
            CheckpointHeader h = read_checkpoint_header(r_ckpt);
            return h.precision == "f64"
                       ? run_demo_recurrent<double>(r_ckpt, r_input, r_mask, r_iters, r_out)
                       : run_demo_recurrent<float>(r_ckpt, r_input, r_mask, r_iters, r_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
