#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "npcnet/embedding.hpp"
#include "npcnet/rng.hpp"

using namespace npcnet;
using Catch::Matchers::WithinAbs;

TEST_CASE("order encoding matches its closed form") {
  const int dim = 8;
  for (int pos : {0, 1, 5, 40}) {
    const Tensor enc = order_encoding(pos, dim);
    for (int i = 0; i < dim / 2; ++i) {
      const double rate = std::pow(10000.0, 2.0 * i / dim);
      REQUIRE_THAT(enc(0, 2 * i), WithinAbs(std::sin(pos / rate), 1e-15));
      REQUIRE_THAT(enc(0, 2 * i + 1), WithinAbs(std::cos(pos / rate), 1e-15));
    }
  }
  // position 0: sin terms 0, cos terms 1
  const Tensor zero = order_encoding(0, dim);
  for (int i = 0; i < dim / 2; ++i) {
    REQUIRE(zero(0, 2 * i) == 0.0);
    REQUIRE(zero(0, 2 * i + 1) == 1.0);
  }
  REQUIRE_THROWS_AS(order_encoding(-1, dim), std::invalid_argument);
  REQUIRE_THROWS_AS(order_encoding(0, 7), std::invalid_argument);
}

TEST_CASE("mean order encoding averages the position rows") {
  const int dim = 6;
  const Tensor mean3 = mean_order_encoding(3, dim);
  for (int j = 0; j < dim; ++j) {
    double expected = 0.0;
    for (int p = 0; p < 3; ++p) expected += order_encoding(p, dim)(0, j) / 3.0;
    REQUIRE_THAT(mean3(0, j), WithinAbs(expected, 1e-14));
  }
  const Tensor empty = mean_order_encoding(0, dim);
  for (int j = 0; j < dim; ++j) REQUIRE(empty(0, j) == 0.0);
}

TEST_CASE("embedding tables are zero-mean uniform in 1/sqrt(d)") {
  Rng rng(9);
  const int dim = 16;
  EmbeddingTables tables = make_embedding_tables(200, {2, 3}, dim, rng);
  REQUIRE(tables.token_table.value().rows() == 200);
  REQUIRE(tables.token_table.value().cols() == 16);
  REQUIRE(tables.static_tables.size() == 2);
  REQUIRE(tables.static_tables[1].value().rows() == 3);

  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  double sum = 0.0;
  for (std::size_t i = 0; i < tables.token_table.value().size(); ++i) {
    const double v = tables.token_table.value().at(i);
    REQUIRE(std::abs(v) <= bound);
    sum += v;
  }
  REQUIRE(std::abs(sum / tables.token_table.value().size()) < bound / 10.0);

  REQUIRE_THROWS_AS(make_embedding_tables(10, {}, 5, rng), std::invalid_argument);
}

TEST_CASE("composition weight blends sequence and static parts") {
  Rng rng(13);
  EmbeddingTables tables = make_embedding_tables(6, {2}, 4, rng);
  const std::vector<int> ids = {1, 4, 2};
  const std::vector<int> statics = {1};
  const Tensor order = order_encoding_matrix(3, 4);

  Var tokens = lookup_tokens(tables, ids);
  Var s = static_embedding(tables, statics);

  SECTION("w = 1 keeps only tokens plus order") {
    const Tensor x = compose_input(tokens, order, s, 1.0).value();
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t j = 0; j < 4; ++j) {
        REQUIRE_THAT(x(t, j),
                     WithinAbs(tokens.value()(t, j) + order(t, j), 1e-14));
      }
    }
  }
  SECTION("w = 0 keeps only the static row") {
    const Tensor x = compose_input(tokens, order, s, 0.0).value();
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t j = 0; j < 4; ++j) {
        REQUIRE_THAT(x(t, j), WithinAbs(s.value()(0, j), 1e-14));
      }
    }
  }
  SECTION("intermediate w is the convex blend") {
    const double w = 0.3;
    const Tensor x = compose_input(tokens, order, s, w).value();
    REQUIRE_THAT(x(1, 2),
                 WithinAbs(w * (tokens.value()(1, 2) + order(1, 2)) +
                               (1.0 - w) * s.value()(0, 2),
                           1e-14));
  }
  SECTION("weight outside [0,1] rejected") {
    REQUIRE_THROWS_AS(compose_input(tokens, order, s, 1.5), std::invalid_argument);
    REQUIRE_THROWS_AS(compose_input(tokens, order, s, -0.1), std::invalid_argument);
  }
}

TEST_CASE("pooled input is the mean over composed positions") {
  Rng rng(17);
  EmbeddingTables tables = make_embedding_tables(5, {2}, 4, rng);
  const std::vector<int> ids = {0, 3};
  const std::vector<int> statics = {0};
  const double w = 0.5;

  Var pooled = pooled_episode_input(tables, ids, statics, w, 128);
  Var tokens = lookup_tokens(tables, ids);
  Var s = static_embedding(tables, statics);
  const Tensor composed =
      compose_input(tokens, order_encoding_matrix(2, 4), s, w).value();
  for (std::size_t j = 0; j < 4; ++j) {
    REQUIRE_THAT(pooled.value()(0, j),
                 WithinAbs(0.5 * (composed(0, j) + composed(1, j)), 1e-14));
  }

  // empty sequences contribute the static part only
  Var empty = pooled_episode_input(tables, {}, statics, w, 128);
  for (std::size_t j = 0; j < 4; ++j) {
    REQUIRE_THAT(empty.value()(0, j), WithinAbs((1.0 - w) * s.value()(0, j), 1e-14));
  }

  // sequences truncate at max length
  Var truncated = pooled_episode_input(tables, {0, 3, 1, 1}, statics, w, 2);
  for (std::size_t j = 0; j < 4; ++j) {
    REQUIRE_THAT(truncated.value()(0, j), WithinAbs(pooled.value()(0, j), 1e-14));
  }
}

TEST_CASE("batched pooled inputs equal the per-episode path") {
  Rng rng(23);
  EmbeddingTables tables = make_embedding_tables(9, {2, 3}, 6, rng);
  const double w = 0.4;
  const int max_len = 5;

  std::vector<EncodedEpisode> batch;
  batch.push_back({{1, 8, 8, 0}, {0, 2}});
  batch.push_back({{}, {1, 0}});            // empty sequence
  batch.push_back({{2, 2, 2, 2, 2, 2, 2}, {0, 1}});  // truncated
  batch.push_back({{5}, {1, 2}});

  Var x = build_pooled_batch(tables, batch, w, max_len);
  REQUIRE(x.value().rows() == batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var one = pooled_episode_input(tables, batch[i].token_ids, batch[i].statics, w,
                                   max_len);
    for (std::size_t j = 0; j < 6; ++j) {
      REQUIRE_THAT(x.value()(i, j), WithinAbs(one.value()(0, j), 1e-12));
    }
  }

  // and its gradient is exact
  GradCheckReport rep =
      grad_check([&] { return sq_norm(build_pooled_batch(tables, batch, w, max_len)); },
                 tables.parameters());
  REQUIRE(rep.passed);
}

TEST_CASE("batched pooled inputs validate their indices") {
  Rng rng(29);
  EmbeddingTables tables = make_embedding_tables(4, {2}, 4, rng);
  REQUIRE_THROWS_AS(build_pooled_batch(tables, {}, 0.5, 8), std::invalid_argument);

  std::vector<EncodedEpisode> bad_token = {{{4}, {0}}};
  REQUIRE_THROWS_AS(build_pooled_batch(tables, bad_token, 0.5, 8), std::out_of_range);

  std::vector<EncodedEpisode> bad_static = {{{0}, {2}}};
  REQUIRE_THROWS_AS(build_pooled_batch(tables, bad_static, 0.5, 8), std::out_of_range);
}
