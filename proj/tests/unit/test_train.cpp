#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "misf/train.hpp"

using namespace misf;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
    std::string d = (fs::temp_directory_path() / name).string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

RunConfig tiny_cfg(uint64_t seed, int64_t iters) {
    RunConfig cfg;
    cfg.preset = "misf-tiny";
    cfg.variant = "misf";
    cfg.seed = seed;
    cfg.max_iters = iters;
    cfg.batch_size = 2;
    cfg.fixture_count = 4;
    cfg.weights = {1.0, 0.0, 0.0, 0.0};
    return cfg;
}

template <typename T>
Dataset<T> tiny_data(const RunConfig& cfg) {
    return Dataset<T>::fixture(cfg.fixture_count, 64, cfg.seed, Bucket::B20_40);
}

}  // namespace

TEST_CASE("adam first step magnitude is the learning rate") {
    Parameter<double> p("p", Tensor<double>({1, 1, 1, 1}, 1.0));
    Adam<double> opt({&p}, 1e-4);
    p.grad[0] = 0.37;  // any nonzero gradient
    opt.step();
    CHECK(std::abs(1.0 - p.value[0]) == doctest::Approx(1e-4).epsilon(1e-3));
    CHECK(p.grad[0] == 0.0);  // zeroed after the step
    CHECK(opt.t() == 1);
}

TEST_CASE("adam with a zero gradient leaves the parameter unchanged") {
    Parameter<double> p("p", Tensor<double>({1, 1, 1, 1}, 2.5));
    Adam<double> opt({&p}, 1e-2);
    opt.step();
    CHECK(p.value[0] == 2.5);
    CHECK(opt.t() == 1);
}

TEST_CASE("adam drives x^2 toward zero") {
    Parameter<double> p("x", Tensor<double>({1, 1, 1, 1}, 1.0));
    Adam<double> opt({&p}, 1e-2);
    double prev = 1.0;
    for (int i = 0; i < 50; ++i) {
        p.grad[0] = 2.0 * p.value[0];
        opt.step();
        CHECK(std::abs(p.value[0]) < std::abs(prev));
        prev = p.value[0];
    }
}

TEST_CASE("adam ignores frozen parameters") {
    Parameter<double> p("p", Tensor<double>({1, 1, 1, 1}, 1.0));
    p.trainable = false;
    Adam<double> opt({&p}, 1e-2);
    p.grad[0] = 1.0;
    opt.step();
    CHECK(p.value[0] == 1.0);
}

TEST_CASE("one train step updates generator and discriminator") {
    RunConfig cfg = tiny_cfg(3, 1);
    cfg.weights = {1.0, 0.1, 0.0, 0.0};  // exercise the disc path too
    auto data = tiny_data<float>(cfg);
    Trainer<float> trainer(cfg, data);

    MisfModel<float> before(parse_preset(cfg.preset), parse_variant(cfg.variant), cfg.seed);
    auto bp = before.all_params();

    trainer.run([](const TrainRow&) {});
    auto ap = trainer.model().all_params();
    REQUIRE(ap.size() == bp.size());
    auto changed = [&](const std::string& prefix) {
        for (size_t i = 0; i < ap.size(); ++i) {
            if (ap[i]->name.rfind(prefix, 0) != 0) continue;
            for (int64_t j = 0; j < ap[i]->value.size(); ++j)
                if (ap[i]->value[j] != bp[i]->value[j]) return true;
        }
        return false;
    };
    CHECK(changed("sifb."));
    CHECK(changed("kpb."));
    CHECK(changed("disc."));
}

TEST_CASE("training is deterministic per seed") {
    auto run = [&](uint64_t seed) {
        RunConfig cfg = tiny_cfg(seed, 3);
        auto data = tiny_data<float>(cfg);
        Trainer<float> trainer(cfg, data);
        std::string rows;
        trainer.run([&](const TrainRow& r) { rows += train_csv_row(r) + "\n"; });
        return rows;
    };
    std::string a = run(5);
    CHECK(a == run(5));
    CHECK(a != run(6));
}

TEST_CASE("checkpoint round trip restores parameters bitwise") {
    RunConfig cfg = tiny_cfg(7, 2);
    auto data = tiny_data<float>(cfg);
    Trainer<float> trainer(cfg, data);
    trainer.run([](const TrainRow&) {});
    const std::string dir = tmp_dir("misf_ckpt");
    trainer.save(dir);

    Trainer<float> other(cfg, data);
    other.resume(dir);
    CHECK(other.iter() == 2);
    auto a = trainer.model().all_params();
    auto b = other.model().all_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->name == b[i]->name);
        for (int64_t j = 0; j < a[i]->value.size(); ++j) CHECK(a[i]->value[j] == b[i]->value[j]);
    }
}

TEST_CASE("resume mid-run reproduces the uninterrupted trajectory") {
    const int64_t total = 6, half = 3;
    std::vector<std::string> full_rows;
    RunConfig cfg = tiny_cfg(11, total);
    auto data = tiny_data<float>(cfg);
    {
        Trainer<float> trainer(cfg, data);
        trainer.run([&](const TrainRow& r) { full_rows.push_back(train_csv_row(r)); });
    }

    const std::string dir = tmp_dir("misf_resume");
    std::vector<std::string> split_rows;
    {
        RunConfig cfg_half = cfg;
        cfg_half.max_iters = half;
        Trainer<float> trainer(cfg_half, data);
        trainer.run([&](const TrainRow& r) { split_rows.push_back(train_csv_row(r)); });
        trainer.save(dir);
    }
    {
        Trainer<float> trainer(cfg, data);
        trainer.resume(dir);
        trainer.run([&](const TrainRow& r) { split_rows.push_back(train_csv_row(r)); });
    }
    CHECK(split_rows == full_rows);
}

TEST_CASE("checkpoint rejects a corrupted tensor file") {
    RunConfig cfg = tiny_cfg(13, 1);
    auto data = tiny_data<float>(cfg);
    Trainer<float> trainer(cfg, data);
    trainer.run([](const TrainRow&) {});
    const std::string dir = tmp_dir("misf_corrupt");
    trainer.save(dir);
    {
        std::ofstream f(dir + "/sifb.enc1.w.mtf", std::ios::binary | std::ios::trunc);
        f << "garbage";
    }
    Trainer<float> other(cfg, data);
    CHECK_THROWS_WITH_AS(other.resume(dir), doctest::Contains("sifb.enc1.w"), IoError);
}

TEST_CASE("checkpoint rejects a variant mismatch") {
    RunConfig cfg = tiny_cfg(17, 1);
    auto data = tiny_data<float>(cfg);
    Trainer<float> trainer(cfg, data);
    trainer.run([](const TrainRow&) {});
    const std::string dir = tmp_dir("misf_variant");
    trainer.save(dir);
    RunConfig other_cfg = cfg;
    other_cfg.variant = "en-decoder";
    Trainer<float> other(other_cfg, data);
    CHECK_THROWS_AS(other.resume(dir), ContractError);
}

TEST_CASE("delta-forced misf training equals en-decoder training") {
    // identical parameters, λ = (1,0,0,0): the loss traces must match bitwise
    Preset p = parse_preset("misf-tiny");
    p.batch_size = 2;
    MisfModel<float> m_delta(p, Variant::Misf, 23);
    m_delta.force_delta_kernels = true;
    MisfModel<float> m_ed(p, Variant::EnDecoder, 23);

    auto data = Dataset<float>::fixture(4, 64, 23, Bucket::B20_40);
    LossWeights w{1.0, 0.0, 0.0, 0.0};
    Adam<float> opt_d(m_delta.generator_params(), 1e-4);
    Adam<float> opt_dd(m_delta.disc_params(), 1e-4);
    Adam<float> opt_e(m_ed.generator_params(), 1e-4);
    Adam<float> opt_ed(m_ed.disc_params(), 1e-4);

    for (int64_t i = 0; i < 3; ++i) {
        Batch<float> batch = collate(data, batch_indices(data, 2, 23, 0, true)[i % 2]);
        TrainRow rd = train_step<float>(m_delta, nullptr, batch, w, opt_d, opt_dd);
        TrainRow re = train_step<float>(m_ed, nullptr, batch, w, opt_e, opt_ed);
        CHECK(rd.total == re.total);
        CHECK(rd.l1 == re.l1);
    }
}

TEST_CASE("overfit harness reports the untrained baseline at zero iters") {
    RunConfig cfg = tiny_cfg(29, 0);
    auto data = tiny_data<float>(cfg);
    Trainer<float> trainer(cfg, data);
    OverfitPoint baseline = evaluate_training_set(trainer.model(), data, 0);
    OverfitResult res = overfit_harness(trainer);
    CHECK(res.rows.empty());
    CHECK(res.final.iter == 0);
    CHECK(res.final.psnr == doctest::Approx(baseline.psnr));
    CHECK(res.final.ssim == doctest::Approx(baseline.ssim));
}

TEST_CASE("config parsing round trip and validation") {
    const std::string dir = tmp_dir("misf_cfg");
    const std::string path = dir + "/run.cfg";
    {
        std::ofstream f(path);
        f << "# comment\n";
        f << "variant = sem-filter\n";
        f << "lr = 0.0002\n";
        f << "lambda_style = 100\n";
        f << "masked_l1 = true\n";
        f << "seed = 9\n";
    }
    RunConfig cfg = parse_run_config(path);
    CHECK(cfg.variant == "sem-filter");
    CHECK(cfg.lr == doctest::Approx(2e-4));
    CHECK(cfg.weights.style == doctest::Approx(100.0));
    CHECK(cfg.masked_l1);
    CHECK(cfg.seed == 9);

    // identical config -> identical hash; any change -> different hash
    CHECK(config_hash(cfg) == config_hash(parse_run_config(path)));
    RunConfig other = cfg;
    other.seed = 10;
    CHECK(config_hash(cfg) != config_hash(other));

    {
        std::ofstream f(path);
        f << "unknown_key = 1\n";
    }
    CHECK_THROWS_WITH_AS(parse_run_config(path), doctest::Contains("unknown_key"), ConfigError);
    {
        std::ofstream f(path);
        f << "lr = banana\n";
    }
    CHECK_THROWS_AS(parse_run_config(path), ConfigError);
    {
        std::ofstream f(path);
        f << "variant = bogus\n";
    }
    CHECK_THROWS_AS(parse_run_config(path), ConfigError);
}
