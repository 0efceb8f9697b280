#include "model_fixtures.hpp"

#include "pspool/errors.hpp"
#include "pspool/training.hpp"

#include <doctest.h>

#include <filesystem>

using namespace pspool;
namespace fs = std::filesystem;

namespace {

const PoolingKind kAllPooling[] = {PoolingKind::PsMean, PoolingKind::PsMax, PoolingKind::Sag};

Mesh stretched(Mesh m, double sz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& v : m.vertices) {
        v.z() *= sz;
        v += Vec3(oracle::uniform(rng, -0.02, 0.02), oracle::uniform(rng, -0.02, 0.02), oracle::uniform(rng, -0.02, 0.02));
    }
    return m;
}

}  // namespace

TEST_CASE("size configurations") {
    const ModelConfig s = ModelConfig::for_size(SizeTag::S);
    const ModelConfig m = ModelConfig::for_size(SizeTag::M);
    const ModelConfig l = ModelConfig::for_size(SizeTag::L);
    CHECK(std::tuple{s.pooling_depth, s.bottleneck} == std::tuple{2, 256});
    CHECK(std::tuple{m.pooling_depth, m.bottleneck} == std::tuple{2, 512});
    CHECK(std::tuple{l.pooling_depth, l.bottleneck} == std::tuple{3, 1024});
    for (const auto& c : {s, m, l}) {
        CHECK(c.aux_dim == 2);
        CHECK(c.input_dim == 6);
        CHECK(c.widths.size() == static_cast<std::size_t>(c.pooling_depth) + 1);
        CHECK_NOTHROW(c.validate());
    }
    ModelConfig bad = s;
    bad.pooling_depth = 3;
    bad.widths = {8, 8, 8, 8};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.bottleneck = 512;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.aux_dim = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.widths = {32, 64};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    CHECK(parse_pooling("ps_mean") == PoolingKind::PsMean);
    CHECK(parse_pooling("ps-max") == PoolingKind::PsMax);
    CHECK(parse_pooling("sag") == PoolingKind::Sag);
    CHECK_THROWS_AS(parse_pooling("topk"), ConfigError);
    CHECK_THROWS_AS(parse_size("XL"), ConfigError);
}

TEST_CASE("config text round trip") {
    ModelConfig c = ModelConfig::for_size(SizeTag::M, PoolingKind::Sag);
    c.k_s = 6;
    c.widths = {16, 32, 48};
    ModelConfig back = ModelConfig::from_keys(parse_key_values(c.to_text()));
    CHECK(back.to_text() == c.to_text());
    auto kv = parse_key_values("# comment\nsize = L\n\npooling=ps-max  # trailing\n");
    CHECK(kv.at("size") == "L");
    CHECK(kv.at("pooling") == "ps-max");
    CHECK(ModelConfig::from_keys(kv).bottleneck == 1024);
    CHECK_THROWS_AS(parse_key_values("size S\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_keys({{"bottleneck", "many"}}), ConfigError);
}

TEST_CASE("reconstruction loss") {
    std::mt19937_64 rng(1);
    Matrix a = oracle::random_matrix(rng, 40, 3);
    CHECK(reconstruction_loss(a, a) == 0.0);
    Matrix shifted = a.rowwise() + Eigen::RowVector3d(0.06, 0.0, 0.08);
    CHECK(reconstruction_loss(shifted, a) == doctest::Approx(0.01).epsilon(1e-12));
    Matrix b = oracle::random_matrix(rng, 40, 3);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < 40; ++i) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += (a(i, c) - b(i, c)) * (a(i, c) - b(i, c));
        sum += d;
    }
    CHECK(reconstruction_loss(a, b) == doctest::Approx(sum / 40).epsilon(1e-13));
    CHECK_THROWS_AS(reconstruction_loss(a, Matrix(a.topRows(3))), ShapeMismatch);
}

TEST_CASE("shape contracts and mirror symmetry") {
    GraphSample s = fixture::sample_from(fixture::tiny_sphere());
    REQUIRE(s.level_count() == 3);
    for (PoolingKind kind : kAllPooling) {
        CAPTURE(to_string(kind));
        Model m = Model::create(fixture::narrow_config(kind), 3, 7);
        Forward fwd;
        encode(m, s, fwd);
        decode(m, s, fwd);
        const auto& t = fwd.tape;
        CHECK(t.value(fwd.latent).rows() == 1);
        CHECK(t.value(fwd.latent).cols() == 256);
        CHECK(t.value(fwd.aux).rows() == static_cast<Eigen::Index>(s.nodes(2)));
        CHECK(t.value(fwd.aux).cols() == 2);
        CHECK(t.value(fwd.coords).rows() == static_cast<Eigen::Index>(s.nodes(0)));
        CHECK(t.value(fwd.coords).cols() == 3);
        REQUIRE(fwd.level_nodes.size() == 3);
        REQUIRE(fwd.decoder_nodes.size() == 2);
        for (std::size_t l = 0; l < 3; ++l) CHECK(fwd.level_nodes[l] == s.nodes(l));
        for (std::size_t i = 0; i < 2; ++i) CHECK(fwd.decoder_nodes[i] == fwd.level_nodes[2 - i]);
        CHECK(m.encoder.stages.size() == 2);
        CHECK(m.decoder.stages.size() == 2);
        CHECK(m.params.all_finite());

        Forward cf;
        CHECK(cf.tape.value(classify(m, s, cf, false)).cols() == 3);
    }
}

TEST_CASE("operator mismatches are rejected") {
    GraphSample s = fixture::sample_from(fixture::tiny_sphere());
    Model m = Model::create(fixture::narrow_config(PoolingKind::PsMean), 0, 1);
    GraphSample bad = s;
    bad.operators[1] = bad.operators[0];
    Forward f1;
    CHECK_THROWS_AS(encode(m, bad, f1), OperatorMismatch);
    bad = s;
    bad.operators.pop_back();
    Forward f2;
    CHECK_THROWS_AS(encode(m, bad, f2), OperatorMismatch);
    bad = s;
    bad.features = Matrix::Zero(s.features.rows(), 5);
    Forward f3;
    CHECK_THROWS_AS(encode(m, bad, f3), OperatorMismatch);
    Forward f4;
    CHECK_THROWS_AS(decode(m, s, f4), OperatorMismatch);
    Forward f5;
    CHECK_THROWS_AS(classify(m, s, f5, true), ConfigError);
}

TEST_CASE("zero final layer gives zero coordinates") {
    GraphSample s = fixture::sample_from(fixture::tiny_sphere());
    Model m = Model::create(fixture::narrow_config(PoolingKind::PsMean), 0, 3);
    const auto& last = m.decoder.coords.layers.back();
    m.params[last.weight].value.setZero();
    m.params[last.bias].value.setZero();
    Forward fwd;
    encode(m, s, fwd);
    decode(m, s, fwd);
    CHECK(fwd.tape.value(fwd.coords).isZero(0));
}

TEST_CASE("latent is invariant to a vertex permutation") {
    Mesh mesh = shapes::uv_sphere(10, 8);
    for (auto& v : mesh.vertices) v.z() *= 1.3;
    GraphSample s = fixture::sample_from(mesh, 0.25, 8, 16);
    std::mt19937_64 rng(11);
    std::vector<std::uint32_t> perm(s.nodes(0));
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    GraphSample p = fixture::permute_finest(s, perm);
    for (PoolingKind kind : kAllPooling) {
        CAPTURE(to_string(kind));
        Model m = Model::create(ModelConfig::for_size(SizeTag::S, kind), 0, 5);
        const Eigen::RowVectorXd a = embed(m, s), b = embed(m, p);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("full pipeline gradients match finite differences") {
    GraphSample s = fixture::sample_from(fixture::tiny_sphere());
    REQUIRE(s.nodes(0) <= 30);
    for (PoolingKind kind : kAllPooling) {
        CAPTURE(to_string(kind));
        Model m = Model::create(fixture::narrow_config(kind), 0, 21);
        fixture::jitter_biases(m, 9);
        CHECK(fixture::pipeline_gradient_error(m, s, 6, 3) < 1e-4);
    }
}

TEST_CASE("frozen classification leaves encoder gradients at zero") {
    GraphSample s = fixture::sample_from(fixture::tiny_sphere(), 0.5, 4, 8, 1);
    Model m = Model::create(fixture::narrow_config(PoolingKind::PsMean), 3, 4);
    for (bool frozen : {true, false}) {
        Forward fwd;
        nn::Var logits = classify(m, s, fwd, frozen);
        fwd.tape.backward(nn::cross_entropy(fwd.tape, logits, 1));
        Gradients g = zero_gradients(m.params);
        fwd.tape.collect(g);
        double enc = 0.0, head = 0.0;
        for (std::size_t i : m.parameter_indices("enc.")) enc += g[i].norm();
        for (std::size_t i : m.parameter_indices("head.")) head += g[i].norm();
        CHECK(head > 0.0);
        if (frozen) CHECK(enc == 0.0);
        else CHECK(enc > 0.0);
    }
}

TEST_CASE("aux path reaches the reconstruction") {
    std::vector<GraphSample> toy{fixture::sample_from(fixture::tiny_sphere())};
    Model m = Model::create(fixture::narrow_config(PoolingKind::PsMean), 0, 9);
    TrainOptions opts;
    opts.max_epochs = 30;
    opts.patience = 30;
    opts.batch = 1;
    train_autoencoder(m, toy, toy, opts);
    Forward full;
    encode(m, toy[0], full);
    decode(m, toy[0], full);
    Forward ablated;
    encode(m, toy[0], ablated);
    ablated.aux = ablated.tape.constant(Matrix::Zero(static_cast<Eigen::Index>(toy[0].nodes(2)), 2));
    decode(m, toy[0], ablated);
    CHECK((full.tape.value(full.coords) - ablated.tape.value(ablated.coords)).norm() > 1e-8);
}

TEST_CASE("separable two-class toy reaches full training accuracy") {
    std::vector<GraphSample> train;
    for (int i = 0; i < 3; ++i) {
        train.push_back(fixture::sample_from(stretched(shapes::uv_sphere(8, 6), 1.0, 100 + i), 0.25, 4, 8, 0));
        train.push_back(fixture::sample_from(stretched(shapes::uv_sphere(8, 6), 2.5, 200 + i), 0.25, 4, 8, 1));
    }
    Model m = Model::create(ModelConfig::for_size(SizeTag::S, PoolingKind::PsMean), 2, 13);
    Adam adam(m.params);
    std::vector<std::size_t> trainable = m.parameter_indices("enc.");
    for (std::size_t i : m.parameter_indices("head.")) trainable.push_back(i);
    int steps = 0;
    for (; steps < 200; ++steps) {
        if (evaluate_classifier(m, train).accuracy == 1.0) break;
        Gradients total = zero_gradients(m.params);
        for (const auto& s : train) {
            Forward fwd;
            nn::Var logits = classify(m, s, fwd, false);
            fwd.tape.backward(nn::cross_entropy(fwd.tape, logits, s.label));
            fwd.tape.collect(total);
        }
        scale(total, 1.0 / static_cast<double>(train.size()));
        adam.step(m.params, total, 1e-3, trainable);
    }
    MESSAGE("steps to 100% training accuracy: " << steps);
    CHECK(evaluate_classifier(m, train).accuracy == 1.0);
}

TEST_CASE("200 optimizer steps cut the reconstruction loss tenfold") {
    std::vector<GraphSample> toy;
    for (int i = 0; i < 5; ++i)
        toy.push_back(fixture::sample_from(stretched(shapes::uv_sphere(8, 6), 1.0 + 0.2 * i, 300 + i), 0.5, 4, 8));
    Model m = Model::create(ModelConfig::for_size(SizeTag::S, PoolingKind::PsMean), 0, 17);
    const double before = evaluate_reconstruction(m, toy);
    TrainOptions opts;
    opts.lr = 3e-3;
    opts.batch = 5;  // one step per epoch
    opts.max_epochs = 200;
    opts.patience = 200;
    TrainResult r = train_autoencoder(m, toy, toy, opts);
    const double after = evaluate_reconstruction(m, toy);
    MESSAGE("loss " << before << " -> " << after);
    CHECK(r.epochs.size() == 200);
    CHECK(after * 10.0 <= before);
}

TEST_CASE("model checkpoints round trip") {
    GraphSample s = fixture::sample_from(fixture::tiny_sphere());
    Model m = Model::create(fixture::narrow_config(PoolingKind::Sag), 4, 2);
    const fs::path dir = fs::temp_directory_path() / "pspool_test_models";
    fs::create_directories(dir);
    save_model(m, dir / "m.pspw");
    Model back = load_model(dir / "m.pspw");
    CHECK(back.config.to_text() == m.config.to_text());
    CHECK(back.classes == 4);
    CHECK(back.params.size() == m.params.size());
    CHECK((embed(back, s) - embed(m, s)).cwiseAbs().maxCoeff() < 1e-4);
    CHECK_THROWS_AS(load_model(dir / "absent.pspw"), MissingCheckpoint);
    fs::remove_all(dir);
}

TEST_CASE("cluster metric") {
    Matrix c = Matrix::Zero(100, 3);
    for (Eigen::Index i = 0; i < 100; ++i) c(i, 0) = static_cast<double>(i);
    CHECK(largest_cluster_fraction(c, 0.5) == doctest::Approx(0.01));
    // six points collapse within 0.01 of (3, 3, 3)
    for (Eigen::Index i = 0; i < 6; ++i) c.row(i) = Eigen::RowVector3d(3.0, 3.0, 3.0 + 0.0015 * static_cast<double>(i));
    CHECK(largest_cluster_fraction(c, 0.01) == doctest::Approx(0.06));
    // a ball of radius 0.0016 holds a point and its two neighbours
    CHECK(largest_cluster_fraction(c, 0.0016) == doctest::Approx(0.03));
    CHECK(largest_cluster_fraction(c, 0.001) == doctest::Approx(0.01));
}
