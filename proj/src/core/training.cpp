#include "avt/training.hpp"

#include "avt/error.hpp"

namespace avt {

template <typename T>
EpochReport train_epoch(Model<T>& model, Sgd<T>& optimizer, const TrainSetup& setup,
                        std::uint64_t epoch, double lr) {
  if (!setup.train) throw Error("train_epoch: no training set");
  EpochReport rep;
  rep.epoch = epoch;
  rep.lr = lr;
  const auto batches = epoch_batches(setup.train->count, setup.batch_size, setup.seed, epoch);
  double total = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    Rng rng = derive_rng(setup.seed, {0x7A11ull, epoch, b});
    const auto batch = make_transform_batch(*setup.train, batches[b], setup.norm, setup.prior,
                                            setup.standardizer, rng);
    auto r = avt_loss(model, batch, setup.objective, ad::Mode::kTrain, rng);
    if (r.diagnostics.min_logvar < kLogvarMin || r.diagnostics.max_logvar > kLogvarMax)
      throw Error("train_epoch: log-variance escaped its clamp range");
    ad::backward(r.loss);
    optimizer.step(model.parameters(), lr);
    total += r.diagnostics.nll;
    rep.last = r.diagnostics;
  }
  rep.batches = batches.size();
  rep.train_nll = total / static_cast<double>(batches.size());
  return rep;
}

template <typename T>
double heldout_nll(Model<T>& model, const TrainSetup& setup) {
  if (!setup.heldout) throw Error("heldout_nll: no held-out set");
  ad::NoGradGuard no_grad;
  const Dataset& ds = *setup.heldout;
  Rng rng = derive_rng(setup.seed, {0x4E1Dull});
  double total = 0;
  for (std::size_t begin = 0; begin < ds.count; begin += setup.batch_size) {
    const std::size_t end = std::min(ds.count, begin + setup.batch_size);
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    const auto batch =
        make_transform_batch(ds, idx, setup.norm, setup.prior, setup.standardizer, rng);
    const auto r = avt_loss(model, batch, setup.objective, ad::Mode::kEval, rng,
                            setup.heldout_samples);
    total += r.diagnostics.nll * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(ds.count);
}

template EpochReport train_epoch(Model<float>&, Sgd<float>&, const TrainSetup&, std::uint64_t,
                                 double);
template EpochReport train_epoch(Model<double>&, Sgd<double>&, const TrainSetup&, std::uint64_t,
                                 double);
template double heldout_nll(Model<float>&, const TrainSetup&);
template double heldout_nll(Model<double>&, const TrainSetup&);

}  // namespace avt
