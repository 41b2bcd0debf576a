#pragma once

// Alternating discriminator/generator optimization, checkpointing and the
// small-scale overfit harness.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "misf/config.hpp"
#include "misf/data.hpp"
#include "misf/metrics.hpp"
#include "misf/optim.hpp"

namespace misf {

struct TrainRow {
    int64_t iter = 0;
    double l1 = 0, gan = 0, perc = 0, style = 0, total = 0;
    double psnr_train = 0;
};

inline std::string train_csv_header() { return "iter,l1,gan,perc,style,total,psnr_train"; }

inline std::string train_csv_row(const TrainRow& r) {
    std::ostringstream os;
    os << r.iter << "," << std::setprecision(8) << std::fixed << r.l1 << "," << r.gan << ","
       << r.perc << "," << r.style << "," << r.total << "," << std::min(r.psnr_train, 99.0);
    return os.str();
}

// One optimization step. The discriminator updates first on (clean, detached
// prediction); the generator loss is then built against the updated
// discriminator. A non-finite loss dumps the batch and aborts.
template <typename T>
TrainRow train_step(MisfModel<T>& model, FeatureExtractor<T>* fx, const Batch<T>& batch,
                    const LossWeights& weights, Adam<T>& gen_opt, Adam<T>& disc_opt,
                    bool masked_l1 = false, const std::string& dump_dir = "") {
    TrainRow row;

    Tape<T> tg;
    auto fw = model.forward(tg, batch.corrupted, batch.mask);
    // copy: the reference into the tape would dangle once more nodes are added
    const Tensor<T> pred = tg.value(fw.out);

    auto abort_nan = [&](const std::string& where) {
        if (!dump_dir.empty()) {
            std::filesystem::create_directories(dump_dir);
            write_mtf1(dump_dir + "/clean.mtf", batch.clean);
            write_mtf1(dump_dir + "/mask.mtf", batch.mask);
            write_mtf1(dump_dir + "/corrupted.mtf", batch.corrupted);
        }
        throw NumericError("train_step: non-finite " + where +
                           (dump_dir.empty() ? "" : ", batch dumped to " + dump_dir));
    };
    if (!pred.all_finite()) abort_nan("prediction");

    if (weights.gan != 0) {
        Tape<T> td;
        Var real = model.discriminator_forward(td, td.constant(batch.clean, "real"));
        Var fake = model.discriminator_forward(td, td.constant(pred, "fake"));
        Var dl = discriminator_gan_loss(td, real, fake);
        if (!td.value(dl).all_finite()) abort_nan("discriminator loss");
        td.backward(dl);
        disc_opt.step();
    }

    Var logits{};
    if (weights.gan != 0)
        logits = model.discriminator_forward(tg, fw.out, /*frozen=*/true);
    Var mask_var = masked_l1 ? tg.constant(batch.mask, "mask") : Var{};
    Var target = tg.constant(batch.clean, "target");
    TotalLoss<T> loss = total_loss(tg, fw.out, target, weights, logits, fx, mask_var);

    row.l1 = loss.l1;
    row.gan = loss.gan;
    row.perc = loss.perc;
    row.style = loss.style;
    row.total = static_cast<double>(tg.value(loss.total)[0]);
    if (!std::isfinite(row.total)) abort_nan("generator loss");

    tg.backward(loss.total);
    gen_opt.step();

    row.psnr_train = psnr(pred, batch.clean);
    return row;
}

// ---- checkpointing ----------------------------------------------------------

namespace detail {

inline std::string param_role(const std::string& name) {
    if (name.rfind("sifb.", 0) == 0) return "sifb";
    if (name.rfind("kpb.", 0) == 0) return "kpb";
    if (name.rfind("disc.", 0) == 0) return "disc";
    return "other";
}

template <typename T>
void save_adam(const std::string& dir, Adam<T>& opt) {
    for (size_t k = 0; k < opt.size(); ++k) {
        const std::string& name = opt.params()[k]->name;
        write_mtf1(dir + "/" + name + ".adam1.mtf", opt.moment1(k));
        write_mtf1(dir + "/" + name + ".adam2.mtf", opt.moment2(k));
    }
}

template <typename T>
void load_adam(const std::string& dir, Adam<T>& opt) {
    for (size_t k = 0; k < opt.size(); ++k) {
        const std::string& name = opt.params()[k]->name;
        Tensor<T> m1 = read_mtf1<T>(dir + "/" + name + ".adam1.mtf");
        Tensor<T> m2 = read_mtf1<T>(dir + "/" + name + ".adam2.mtf");
        check(m1.shape() == opt.moment1(k).shape() && m2.shape() == opt.moment2(k).shape(),
              "checkpoint: moment shape mismatch for " + name);
        opt.moment1(k) = std::move(m1);
        opt.moment2(k) = std::move(m2);
    }
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& dir, MisfModel<T>& model, Adam<T>& gen_opt,
                     Adam<T>& disc_opt, int64_t step, const RunConfig& cfg) {
    std::filesystem::create_directories(dir);
    auto params = model.all_params();
    for (auto* p : params) write_mtf1(dir + "/" + p->name + ".mtf", p->value);
    detail::save_adam(dir, gen_opt);
    detail::save_adam(dir, disc_opt);

    std::ofstream f(dir + "/checkpoint.txt");
    if (!f) throw IoError("checkpoint: cannot write manifest in " + dir);
    f << "variant = " << cfg.variant << "\n";
    f << "preset = " << cfg.preset << "\n";
    f << "precision = " << cfg.precision << "\n";
    f << "step = " << step << "\n";
    f << "gen_t = " << gen_opt.t() << "\n";
    f << "disc_t = " << disc_opt.t() << "\n";
    f << "config_hash = " << config_hash(cfg) << "\n";
    for (auto* p : params) {
        const Shape& s = p->value.shape();
        f << "param " << p->name << " " << s.str() << " " << detail::param_role(p->name) << "\n";
    }
    if (!f) throw IoError("checkpoint: manifest write failed in " + dir);
}

// Restores parameters and optimizer moments; returns the saved step counter.
// A config-hash mismatch warns on stderr but does not fail.
template <typename T>
int64_t load_checkpoint(const std::string& dir, MisfModel<T>& model, Adam<T>* gen_opt,
                        Adam<T>* disc_opt, const RunConfig& cfg) {
    std::ifstream f(dir + "/checkpoint.txt");
    if (!f) throw IoError("checkpoint: cannot open manifest in " + dir);
    int64_t step = -1, gen_t = 0, disc_t = 0;
    std::string variant, line;
    uint64_t saved_hash = 0;
    std::vector<std::pair<std::string, std::string>> listed;  // name, shape
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "param") {
            std::string name, shape, role;
            ss >> name >> shape >> role;
            listed.emplace_back(name, shape);
            continue;
        }
        std::string eq, val;
        ss >> eq >> val;
        if (key == "step") step = std::stoll(val);
        if (key == "gen_t") gen_t = std::stoll(val);
        if (key == "disc_t") disc_t = std::stoll(val);
        if (key == "variant") variant = val;
        if (key == "config_hash") saved_hash = std::stoull(val);
    }
    check(step >= 0, "checkpoint: manifest in " + dir + " has no step counter");
    if (!variant.empty() && variant != cfg.variant)
        throw ContractError("checkpoint: variant mismatch, saved '" + variant + "' vs requested '" +
                            cfg.variant + "'");
    if (saved_hash != config_hash(cfg))
        std::cerr << "warning: checkpoint config hash differs from the current config\n";

    auto params = model.all_params();
    check(listed.size() == params.size(),
          "checkpoint: expected " + std::to_string(params.size()) + " parameters, manifest lists " +
              std::to_string(listed.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        check(listed[i].first == params[i]->name,
              "checkpoint: parameter name mismatch at position " + std::to_string(i) + ": " +
                  listed[i].first + " vs " + params[i]->name);
        check(listed[i].second == params[i]->value.shape().str(),
              "checkpoint: shape mismatch for " + params[i]->name);
    }
    for (auto* p : params) {
        Tensor<T> v = read_mtf1<T>(dir + "/" + p->name + ".mtf");
        check(v.shape() == p->value.shape(), "checkpoint: tensor shape mismatch for " + p->name);
        p->value = std::move(v);
        p->zero_grad();
    }
    if (gen_opt) {
        detail::load_adam(dir, *gen_opt);
        gen_opt->set_t(gen_t);
    }
    if (disc_opt) {
        detail::load_adam(dir, *disc_opt);
        disc_opt->set_t(disc_t);
    }
    return step;
}

// ---- training loop ----------------------------------------------------------

template <typename T>
class Trainer {
  public:
    Trainer(RunConfig cfg, Dataset<T> data)
        : cfg_(std::move(cfg)),
          data_(std::move(data)),
          preset_(parse_preset(cfg_.preset)),
          model_(preset_, parse_variant(cfg_.variant), cfg_.seed),
          fx_(cfg_.fx_seed),
          gen_opt_(model_.generator_params(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps),
          disc_opt_(model_.disc_params(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps) {
        if (cfg_.batch_size > 0) preset_.batch_size = cfg_.batch_size;
        check(data_.size() >= preset_.batch_size,
              "train: split smaller than one batch (" + std::to_string(data_.size()) + " < " +
                  std::to_string(preset_.batch_size) + ")");
    }

    MisfModel<T>& model() { return model_; }
    FeatureExtractor<T>& fx() { return fx_; }
    Adam<T>& gen_opt() { return gen_opt_; }
    Adam<T>& disc_opt() { return disc_opt_; }
    int64_t iter() const { return iter_; }
    const Dataset<T>& data() const { return data_; }

    void resume(const std::string& checkpoint_dir) {
        iter_ = load_checkpoint(checkpoint_dir, model_, &gen_opt_, &disc_opt_, cfg_);
    }

    // Runs until max_iters; per_row is called after every step.
    template <typename F>
    void run(F&& per_row, const std::string& dump_dir = "") {
        FeatureExtractor<T>* fx =
            (cfg_.weights.perc != 0 || cfg_.weights.style != 0) ? &fx_ : nullptr;
        const int64_t bpe = data_.size() / preset_.batch_size;
        while (iter_ < cfg_.max_iters) {
            const int64_t epoch = iter_ / bpe;
            if (epoch != cached_epoch_) {
                epoch_batches_ = batch_indices(data_, preset_.batch_size, cfg_.seed, epoch, true);
                cached_epoch_ = epoch;
            }
            Batch<T> batch = collate(data_, epoch_batches_[static_cast<size_t>(iter_ % bpe)]);
            TrainRow row = train_step(model_, fx, batch, cfg_.weights, gen_opt_, disc_opt_,
                                      cfg_.masked_l1, dump_dir);
            row.iter = ++iter_;
            per_row(row);
        }
    }

    void save(const std::string& dir) { save_checkpoint(dir, model_, gen_opt_, disc_opt_, iter_, cfg_); }

  private:
    RunConfig cfg_;
    Dataset<T> data_;
    Preset preset_;
    MisfModel<T> model_;
    FeatureExtractor<T> fx_;
    Adam<T> gen_opt_, disc_opt_;
    int64_t iter_ = 0;
    int64_t cached_epoch_ = -1;
    std::vector<std::vector<int64_t>> epoch_batches_;
};

// ---- overfit harness --------------------------------------------------------

struct OverfitPoint {
    int64_t iter = 0;
    double psnr = 0, ssim = 0, l1_pct = 0;
};

struct OverfitResult {
    std::vector<OverfitPoint> curve;  // every 100 iters plus iter 0 and the end
    OverfitPoint final;
    std::vector<TrainRow> rows;
};

// Training-set quality of the composited output, averaged over the split.
template <typename T>
OverfitPoint evaluate_training_set(MisfModel<T>& model, const Dataset<T>& data, int64_t iter) {
    OverfitPoint pt;
    pt.iter = iter;
    for (int64_t i = 0; i < data.size(); ++i) {
        ImageSample<T> s = data.sample(i);
        Tape<T> t;
        auto fw = model.forward(t, s.corrupted, s.mask, /*frozen=*/true);
        const Tensor<T>& out = t.value(fw.out);
        pt.psnr += std::min(psnr(out, s.clean), 99.0);
        pt.ssim += ssim(out, s.clean);
        pt.l1_pct += l1_pct(out, s.clean);
    }
    pt.psnr /= static_cast<double>(data.size());
    pt.ssim /= static_cast<double>(data.size());
    pt.l1_pct /= static_cast<double>(data.size());
    return pt;
}

template <typename T>
OverfitResult overfit_harness(Trainer<T>& trainer, int64_t eval_every = 100) {
    OverfitResult res;
    res.curve.push_back(evaluate_training_set(trainer.model(), trainer.data(), trainer.iter()));
    trainer.run([&](const TrainRow& row) {
        res.rows.push_back(row);
        if (row.iter % eval_every == 0)
            res.curve.push_back(evaluate_training_set(trainer.model(), trainer.data(), row.iter));
    });
    if (res.curve.back().iter != trainer.iter())
        res.curve.push_back(evaluate_training_set(trainer.model(), trainer.data(), trainer.iter()));
    res.final = res.curve.back();
    return res;
}

}  // namespace misf
