// Acceptance gate: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "gradcheck.hpp"
#include "sgcn/cli.hpp"
#include "sgcn/sgcn.hpp"
#include "synthetic.hpp"

using namespace sgcn;
using testing::check_gradients;
using testing::random_tensor;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------

void gradient_correctness() {
  Stopwatch clock;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto record = [&](const std::string& what, const testing::GradCheck& g) {
    checks += g.checked;
    if (g.max_rel_error >= worst) {
      worst = g.max_rel_error;
      worst_name = what + ":" + g.worst;
    }
  };

  {  // embedding
    Rng r(1);
    auto table = EmbeddingTable::create(6, 4, r);
    const std::size_t ids[] = {2, 5, 2, 1};
    auto w = random_tensor({4, 4}, rng);
    record("embedding", check_gradients([&] { return sum(mul(embed(ids, table), w)); }, {table.weight}));
  }
  {  // each LSTM gate path, both directions
    Rng r(2);
    auto layer = BiLstmLayer::create(4, 3, r);
    auto x = random_tensor({4, 4}, rng);
    auto w = random_tensor({4, 6}, rng);
    for (int g = 0; g < 4; ++g) {
      for (auto* cell : {&layer.forward_cell, &layer.backward_cell}) {
        record(std::string("lstm.") + LstmCell::kGateNames[g],
               check_gradients([&] { return sum(mul(layer.forward(x), w)); }, {cell->w[g], cell->u[g], cell->b[g]}));
      }
    }
    record("lstm.input", check_gradients([&] { return sum(mul(layer.forward(x), w)); }, {x}));
  }
  {  // batch norm
    auto bn = BatchNorm::create(6);
    auto x = random_tensor({7, 6}, rng);
    auto w = random_tensor({7, 6}, rng);
    record("batch_norm",
           check_gradients([&] { return sum(mul(bn.forward(x, Mode::train), w)); }, {x, bn.gamma, bn.beta}));
  }
  {  // GCN
    Rng r(3);
    auto rec = testing::random_record({4}, rng);
    auto layer = GcnLayer::create(6, 3, r);
    auto a = build_graph(rec, AdjacencyMode::syntax, 8).normalized_block();
    auto l = random_tensor({4, 6}, rng);
    auto w = random_tensor({4, 3}, rng);
    record("gcn", check_gradients([&] { return sum(mul(gcn(l, a, layer), w)); }, {l, layer.theta}));
  }
  {  // pooling heads
    auto w = random_tensor({3}, rng);
    for (double p : {0.0, 30.0, 50.0, 100.0}) {
      auto z = random_tensor({5, 3}, rng);
      record("percentile_pool", check_gradients([&] { return sum(mul(percentile_pool(z, p), w)); }, {z}));
    }
    auto z = random_tensor({5, 3}, rng);
    record("average_pool", check_gradients([&] { return sum(mul(average_pool(z), w)); }, {z}));
    Rng r(4);
    auto head = FcHead::create(8, 3, r);
    record("fc_head", check_gradients([&] { return sum(mul(fc_head(z, head), w)); }, {z, head.weight, head.bias}));
  }
  // End to end on the toy configuration, every pooling head.
  for (PoolingSpec pooling : {PoolingSpec{PoolingKind::percentile, 50}, PoolingSpec{PoolingKind::average, 50},
                              PoolingSpec{PoolingKind::fc, 50}}) {
    TrainConfig c;
    c.embedding_size = 4;
    c.hidden_neurons = 3;
    c.classes = 3;
    c.max_len = 4;
    c.dropout = 0.0;
    c.pooling = pooling;
    c.lambda_orth = 1e-2;
    c.lambda_l2 = 1e-2;
    std::vector<std::string> words{"<pad>", "<unk>"};
    for (int i = 0; i < 50; ++i) words.push_back("w" + std::to_string(i));
    Rng r(5);
    auto model = Model::create(c, Vocabulary(words), r);
    std::vector<Record> recs = {testing::random_record({4}, rng, 0), testing::random_record({2, 1}, rng, 2),
                                testing::random_record({1}, rng, 1)};
    auto ex = make_examples(recs, model.vocab, c);
    std::vector<const Example*> batch;
    std::vector<int> labels;
    for (auto& e : ex) {
      batch.push_back(&e);
      labels.push_back(e.label);
    }
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (auto& p : model.parameters()) {
      params.push_back(p.tensor);
      names.push_back(p.name);
    }
    const auto weights = model.regularized_weights();
    record("end_to_end/" + to_string(pooling), check_gradients(
                                                   [&] {
                                                     auto logits = model.forward(batch, Mode::train, nullptr);
                                                     return total_loss(logits, labels, weights, c.lambda_orth,
                                                                       c.lambda_l2);
                                                   },
                                                   params, names));
  }
  const double secs = clock.seconds();
  report(worst < 1e-4 && secs < 60.0, "gradient-correctness",
         "max rel err " + sci(worst) + " at " + worst_name + " over " + std::to_string(checks) +
             " entries (limit 1e-4), " + fixed(secs, 1) + "s (limit 60s)");
}

// ---------------------------------------------------------------------------

void percentile_oracle() {
  Stopwatch clock;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> len(1, 140);
  std::size_t mismatches = 0, comparisons = 0, max_bad = 0, median_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = len(rng);
    auto z = random_tensor({n, 1}, rng, -10, 10);
    std::vector<double> sorted(z.values());
    std::sort(sorted.begin(), sorted.end());
    for (int p = 0; p <= 100; p += 10) {
      const std::size_t rank = std::max<std::size_t>(1, (static_cast<std::size_t>(p) * n + 99) / 100);
      const double got = percentile_pool(z, p).item();
      mismatches += got != sorted[rank - 1];
      ++comparisons;
      if (p == 100) max_bad += got != *std::max_element(z.data().begin(), z.data().end());
      if (p == 50 && n % 2 == 1) {
        auto mid = sorted;
        std::nth_element(mid.begin(), mid.begin() + n / 2, mid.end());
        median_bad += got != mid[n / 2];
      }
    }
  }
  report(mismatches == 0 && max_bad == 0 && median_bad == 0, "percentile-oracle",
         std::to_string(comparisons - mismatches) + "/" + std::to_string(comparisons) +
             " exact matches; p=100 vs max mismatches " + std::to_string(max_bad) + "; p=50 vs odd-n median mismatches " +
             std::to_string(median_bad) + ", " + fixed(clock.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------

void graph_construction() {
  Stopwatch clock;
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> len(1, 140), parts(1, 3);
  constexpr std::size_t dim = kDefaultMaxLen;
  std::size_t structural = 0;
  double max_err = 0.0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = len(rng);
    const auto rec = testing::random_record(testing::random_partition(n, parts(rng), rng), rng);
    const auto g = build_graph(rec, AdjacencyMode::syntax, dim);

    // Independent adjacency from the head arrays.
    std::vector<std::vector<int>> a(dim, std::vector<int>(dim, 0));
    std::vector<int> sentence(dim, -1);
    for (std::size_t s = 0; s < rec.sentences.size(); ++s) {
      const auto span = rec.sentences[s];
      for (std::size_t i = span.begin; i < span.end; ++i) {
        sentence[i] = static_cast<int>(s);
        a[i][i] = 1;
        if (rec.heads[i] > 0) {
          const std::size_t h = span.begin + rec.heads[i] - 1;
          a[i][h] = a[h][i] = 1;
        }
      }
    }
    std::vector<double> deg(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) deg[i] += a[i][j];

    for (std::size_t i = 0; i < dim; ++i) {
      if (i < n && g.a(i, i) != 1) ++structural;
      for (std::size_t j = 0; j < dim; ++j) {
        if (g.a(i, j) != a[i][j] || g.a(i, j) != g.a(j, i)) ++structural;
        if ((i >= n || j >= n) && (g.a(i, j) != 0 || g.a_hat(i, j) != 0.0)) ++structural;
        if (g.a(i, j) && sentence[i] != sentence[j]) ++structural;
        const double want = a[i][j] ? a[i][j] / std::sqrt(deg[i] * deg[j]) : 0.0;
        max_err = std::max(max_err, std::abs(g.a_hat(i, j) - want));
      }
    }
  }
  Record chain;
  chain.tokens = {"a", "b", "c"};
  chain.heads = {2, 0, 2};
  chain.sentences = {{0, 3}};
  const double a01 = build_graph(chain, AdjacencyMode::syntax).a_hat(0, 1);
  const double chain_err = std::abs(a01 - 1.0 / std::sqrt(6.0));
  report(structural == 0 && max_err < 1e-12 && chain_err < 1e-15, "graph-construction",
         "500 trees: structural violations " + std::to_string(structural) + ", max |A_hat - oracle| " + sci(max_err) +
             " (limit 1e-12); chain A_hat[0][1] = " + fixed(a01, 12) + " vs 1/sqrt(6), " + fixed(clock.seconds(), 2) +
             "s");
}

// ---------------------------------------------------------------------------

void orthogonal_init() {
  std::mt19937_64 shapes(404);
  std::uniform_int_distribution<std::size_t> dim(1, 400);
  Rng rng(405);
  double worst = 0.0;
  std::size_t wide = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = dim(shapes), c = dim(shapes);
    const auto w = Tensor::matrix(r, c, orth_init(r, c, rng));
    // Gram matrix on the smaller side; W^T W for tall and square shapes.
    wide += r < c;
    const Tensor gram = r >= c ? matmul(transpose(w), w) : matmul(w, transpose(w));
    worst = std::max(worst, std::sqrt(squared_norm(sub(gram, Tensor::identity(gram.dim(0)))).item()));
  }
  const Tensor logits[] = {Tensor::vector({0, 0})};
  const int labels[] = {0};
  const Tensor two_i[] = {Tensor::matrix(2, 2, {2, 0, 0, 2})};
  const double penalty = total_loss(logits, labels, two_i, 1.0, 0.0).item() - std::log(2.0);
  report(worst < 1e-8 && std::abs(penalty - 18.0) < 1e-12, "orthogonal-init",
         "50 shapes (" + std::to_string(50 - wide) + " tall/square, " + std::to_string(wide) +
             " wide): max ||Gram - I||_F " + sci(worst) + " (limit 1e-8); penalty(2I) = " + fixed(penalty, 12));
}

// ---------------------------------------------------------------------------

void metrics_oracle() {
  std::mt19937_64 rng(505);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::uniform_int_distribution<std::size_t> cls(2, 7), len(1, 80);
    const std::size_t classes = cls(rng), n = len(rng);
    std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = label(rng);
      gold[i] = label(rng);
    }
    const auto rep = evaluate(pred, gold, classes);
    double sp = 0, sr = 0, correct = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      double g = 0, p = 0, k = 0;
      for (std::size_t i = 0; i < n; ++i) {
        g += gold[i] == static_cast<int>(c);
        p += pred[i] == static_cast<int>(c);
        k += gold[i] == static_cast<int>(c) && pred[i] == static_cast<int>(c);
      }
      const double prec = p ? k / p : 0.0, rec = g ? k / g : 0.0;
      bad += rep.per_class[c].gold != g || rep.per_class[c].proposed != p || rep.per_class[c].correct != k;
      bad += std::abs(rep.per_class[c].prf.precision - prec) > 1e-15 || std::abs(rep.per_class[c].prf.recall - rec) > 1e-15;
      sp += prec;
      sr += rec;
      correct += k;
    }
    const double mp = sp / classes, mr = sr / classes;
    const double mf = mp + mr > 0 ? 2 * mp * mr / (mp + mr) : 0.0;
    const double acc = correct / n;
    bad += std::abs(rep.macro.precision - mp) > 1e-15 || std::abs(rep.macro.recall - mr) > 1e-15 ||
           std::abs(rep.macro.f - mf) > 1e-15;
    bad += std::abs(rep.micro.precision - acc) > 1e-15 || std::abs(rep.micro.recall - acc) > 1e-15 ||
           std::abs(rep.micro.f - acc) > 1e-15;
  }
  const std::vector<int> gold = {0, 0, 1, 1}, pred = {0, 1, 1, 1};
  const double micro = evaluate(pred, gold, 2).micro.f;
  report(bad == 0 && micro == 0.75, "metrics-oracle",
         "1000 random cases: " + std::to_string(bad) + " disagreements; 4-sample binary micro F = " + fixed(micro, 17));
}

// ---------------------------------------------------------------------------

void overfit() {
  Stopwatch clock;
  TrainConfig c;  // published defaults, scaled down
  c.hidden_neurons = 16;
  c.embedding_size = 16;
  c.epochs = 200;
  std::mt19937_64 rng(c.seed);
  auto recs = testing::keyword_corpus(7, 3, rng);
  recs.resize(20);
  std::size_t reached = 0;
  double last = 0.0;
  train(c, recs, {}, [&](const EpochStats& s) {
    if (!reached && s.train_accuracy == 1.0) reached = s.epoch;
    last = s.train_accuracy;
  });
  const double secs = clock.seconds();
  report(reached > 0 && secs < 120.0, "overfit",
         reached ? "100% training accuracy at epoch " + std::to_string(reached) + " (limit 200), " + fixed(secs, 1) +
                       "s (limit 120s)"
                 : "training accuracy " + fixed(last) + " after 200 epochs, " + fixed(secs, 1) + "s");
}

// ---------------------------------------------------------------------------

void syntax_sensitivity() {
  Stopwatch clock;
  std::mt19937_64 rng(20190917);
  const auto recs = testing::root_word_corpus(500, rng);
  const std::vector<Record> tr(recs.begin(), recs.begin() + 400), dv(recs.begin() + 400, recs.end());
  double best[2] = {0, 0};
  std::size_t epoch[2] = {0, 0};
  for (int m = 0; m < 2; ++m) {
    TrainConfig c;
    c.hidden_neurons = 16;
    c.embedding_size = 16;
    c.classes = 2;
    c.learning_rate = 1e-2;
    c.epochs = 30;
    c.adjacency_mode = m == 0 ? AdjacencyMode::syntax : AdjacencyMode::all_ones;
    const auto res = train(c, tr, dv);
    epoch[m] = res.best_epoch;
    best[m] = res.history[res.best_epoch - 1].dev_macro_f;
  }
  report(best[0] > best[1], "syntax-sensitivity",
         "dev macro-F syntax " + fixed(best[0]) + " (epoch " + std::to_string(epoch[0]) + ") vs all_ones " +
             fixed(best[1]) + " (epoch " + std::to_string(epoch[1]) + "), " + fixed(clock.seconds(), 1) + "s");
}

// ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("sgcn_acceptance." + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 rng(606);
  auto recs = testing::keyword_corpus(7, 6, rng);
  {
    std::ofstream tr(dir / "train.jsonl"), dv(dir / "dev.jsonl");
    for (std::size_t i = 0; i < recs.size(); ++i) (i < 35 ? tr : dv) << to_json_line(recs[i]) << "\n";
    std::ofstream(dir / "run.cfg") << "embedding_size = 16\nhidden_neurons = 16\nepochs = 10\n";
  }
  std::ostringstream sink;
  int codes = 0;
  for (const char* tag : {"a", "b"}) {
    codes |= cli::run({"train", "--config", (dir / "run.cfg").string(), "--train", (dir / "train.jsonl").string(),
                       "--dev", (dir / "dev.jsonl").string(), "--checkpoint",
                       (dir / (std::string(tag) + ".ckpt")).string()},
                      sink, sink);
  }
  const auto ha = slurp(dir / "a.ckpt.history.jsonl"), hb = slurp(dir / "b.ckpt.history.jsonl");
  const auto ca = slurp(dir / "a.ckpt"), cb = slurp(dir / "b.ckpt");
  fs::remove_all(dir);
  report(codes == 0 && !ha.empty() && !ca.empty() && ha == hb && ca == cb, "determinism",
         "history " + std::to_string(ha.size()) + " bytes " + (ha == hb ? "identical" : "DIFFER") + ", checkpoint " +
             std::to_string(ca.size()) + " bytes " + (ca == cb ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void()>>> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"percentile-oracle", percentile_oracle},
      {"graph-construction", graph_construction},
      {"orthogonal-init", orthogonal_init},
      {"metrics-oracle", metrics_oracle},
      {"overfit", overfit},
      {"syntax-sensitivity", syntax_sensitivity},
      {"determinism", determinism},
  };
  for (const auto& [name, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(false, name, std::string("threw: ") + e.what());
    }
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
