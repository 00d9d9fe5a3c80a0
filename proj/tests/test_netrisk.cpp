#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "spillover/netrisk.hpp"

using namespace spillover;

namespace {

BankGraph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  BankGraph g;
  g.adjacency.assign(static_cast<std::size_t>(n), {});
  g.threshold = 1.0;
  for (auto [a, b] : edges) {
    g.adjacency[static_cast<std::size_t>(a)].push_back(b);
    g.adjacency[static_cast<std::size_t>(b)].push_back(a);
    ++g.edge_count;
  }
  return g;
}

BankGraph random_graph(int n, double p, Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.push_back({i, j});
  return graph_from_edges(n, edges);
}

// independent all-pairs oracle
Matrix floyd_warshall(const BankGraph& g) {
  const int n = g.n();
  const double inf = 1e18;
  Matrix d = Matrix::Constant(n, n, inf);
  for (int i = 0; i < n; ++i) d(i, i) = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j : g.adjacency[static_cast<std::size_t>(i)]) d(i, j) = 1.0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d(i, k) + d(k, j) < d(i, j)) d(i, j) = d(i, k) + d(k, j);
  return d;
}

// brute-force triple enumeration
double clustering_oracle(const BankGraph& g, int v) {
  const int n = g.n();
  std::vector<int> nb;
  for (int u = 0; u < n; ++u)
    if (g.has_edge(v, u)) nb.push_back(u);
  if (nb.size() < 2) return 0.0;
  int closed = 0, possible = 0;
  for (std::size_t a = 0; a < nb.size(); ++a)
    for (std::size_t b = a + 1; b < nb.size(); ++b) {
      ++possible;
      if (g.has_edge(nb[a], nb[b])) ++closed;
    }
  return static_cast<double>(closed) / possible;
}

}  // namespace

TEST_CASE("binarize applies the symmetric max rule") {
  Matrix raw(3, 3);
  raw << 0, 5, 1, 1, 0, 1, 1, 1, 0;
  WeightMatrix w = row_normalize(raw);
  // w(0,1) = 5/6 is the only entry at or above 0.8 in either direction
  BankGraph g = binarize(w, 0.8);
  CHECK(g.edge_count == 1);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK_FALSE(g.has_edge(0, 2));

  // threshold above every entry: empty graph flagged, not an error
  BankGraph empty = binarize(w, 0.99);
  CHECK(empty.edge_count == 0);
  CHECK(empty.empty_warning);

  // epsilon threshold on a strictly positive kernel: complete graph
  BankGraph complete = binarize(w, 1e-12);
  CHECK(complete.edge_count == 3);
  CHECK(complete.density() == Catch::Approx(1.0));
}

TEST_CASE("binarize at the median threshold matches a hand enumeration") {
  // 5-node fixture; pairwise max weights hand-listed and thresholded at the
  // default (median of positive entries)
  Matrix raw(5, 5);
  raw << 0, 4, 1, 0, 0,
         4, 0, 2, 0, 0,
         1, 2, 0, 3, 0,
         0, 0, 3, 0, 5,
         0, 0, 0, 5, 0;
  WeightMatrix w = row_normalize(raw);
  double thr = default_threshold(w);
  BankGraph g = binarize(w, thr);
  // hand check: normalized entries, max over direction, compare to thr
  std::set<std::pair<int, int>> expect;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j)
      if (std::max(w.w()(i, j), w.w()(j, i)) >= thr) expect.insert({i, j});
  CHECK(g.edge_count == static_cast<int>(expect.size()));
  for (auto [i, j] : expect) CHECK(g.has_edge(i, j));
}

TEST_CASE("triangle and star clustering coefficients") {
  BankGraph triangle = graph_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  ClusteringStats ct = clustering_coefficients(triangle);
  for (int v = 0; v < 3; ++v) CHECK(ct.per_node(v) == 1.0);

  BankGraph star = graph_from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  ClusteringStats cs = clustering_coefficients(star);
  for (int v = 0; v < 5; ++v) CHECK(cs.per_node(v) == 0.0);
}

TEST_CASE("clustering matches the brute-force triple count on a fixture") {
  BankGraph g = graph_from_edges(6, {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}, {3, 4}, {4, 5}});
  ClusteringStats c = clustering_coefficients(g);
  for (int v = 0; v < 6; ++v) CHECK(c.per_node(v) == Catch::Approx(clustering_oracle(g, v)));
}

TEST_CASE("clustering group means split by adoption") {
  BankGraph g = graph_from_edges(4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}});
  g.adopter = {1, 1, 0, 0};
  ClusteringStats c = clustering_coefficients(g);
  CHECK(c.adopter_mean == Catch::Approx(0.5 * (c.per_node(0) + c.per_node(1))));
  CHECK(c.non_adopter_mean == Catch::Approx(0.5 * (c.per_node(2) + c.per_node(3))));
  // constant attribute: group mean equals the overall mean
  g.adopter = {1, 1, 1, 1};
  ClusteringStats all = clustering_coefficients(g);
  CHECK(all.adopter_mean == Catch::Approx(all.overall_mean));
}

TEST_CASE("path graph distances by hand") {
  BankGraph g = graph_from_edges(3, {{0, 1}, {1, 2}});
  PathStats p = path_lengths(g);
  // pairs: (0,1)=1, (1,2)=1, (0,2)=2 -> mean 4/3
  CHECK(p.mean_all == Catch::Approx(4.0 / 3.0));
  CHECK(p.connected_pairs == 3);
  CHECK(p.disconnected_pairs == 0);

  BankGraph complete = graph_from_edges(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  CHECK(path_lengths(complete).mean_all == Catch::Approx(1.0));
}

TEST_CASE("BFS distances match the Floyd-Warshall oracle on random graphs") {
  Rng rng(121);
  for (int rep = 0; rep < 5; ++rep) {
    BankGraph g = random_graph(20, 0.15, rng);
    Matrix oracle = floyd_warshall(g);
    double sum = 0;
    long connected = 0, disconnected = 0;
    for (int i = 0; i < 20; ++i)
      for (int j = i + 1; j < 20; ++j) {
        if (oracle(i, j) < 1e17) {
          sum += oracle(i, j);
          ++connected;
        } else {
          ++disconnected;
        }
      }
    PathStats p = path_lengths(g);
    CHECK(p.connected_pairs == connected);
    CHECK(p.disconnected_pairs == disconnected);
    if (connected > 0) CHECK(p.mean_all == Catch::Approx(sum / connected));
  }
}

TEST_CASE("adopter-pair distances use the full graph") {
  BankGraph g = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  g.adopter = {1, 0, 0, 1};
  PathStats p = path_lengths(g);
  // only adopter pair is (0,3) at distance 3 through non-adopters
  CHECK(p.adopter_pairs_connected == 1);
  CHECK(p.mean_adopters == Catch::Approx(3.0));
}

TEST_CASE("statistics are permutation invariant") {
  Rng rng(123);
  BankGraph g = random_graph(12, 0.3, rng);
  g.adopter.assign(12, 0);
  for (int i = 0; i < 5; ++i) g.adopter[static_cast<std::size_t>(i)] = 1;
  ClusteringStats c0 = clustering_coefficients(g);
  PathStats p0 = path_lengths(g);

  std::vector<int> perm(12);
  for (int i = 0; i < 12; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  BankGraph h;
  h.adjacency.assign(12, {});
  h.adopter.assign(12, 0);
  std::vector<int> inverse(12);
  for (int i = 0; i < 12; ++i) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  for (int i = 0; i < 12; ++i) {
    h.adopter[static_cast<std::size_t>(inverse[static_cast<std::size_t>(i)])] = g.adopter[static_cast<std::size_t>(i)];
    for (int j : g.adjacency[static_cast<std::size_t>(i)])
      if (inverse[static_cast<std::size_t>(i)] < inverse[static_cast<std::size_t>(j)]) {
        h.adjacency[static_cast<std::size_t>(inverse[static_cast<std::size_t>(i)])].push_back(inverse[static_cast<std::size_t>(j)]);
        h.adjacency[static_cast<std::size_t>(inverse[static_cast<std::size_t>(j)])].push_back(inverse[static_cast<std::size_t>(i)]);
        ++h.edge_count;
      }
  }
  ClusteringStats c1 = clustering_coefficients(h);
  PathStats p1 = path_lengths(h);
  CHECK(c1.overall_mean == Catch::Approx(c0.overall_mean));
  CHECK(c1.adopter_mean == Catch::Approx(c0.adopter_mean));
  CHECK(p1.mean_all == Catch::Approx(p0.mean_all));
  CHECK(p1.mean_adopters == Catch::Approx(p0.mean_adopters));
}

TEST_CASE("adding an edge never lengthens a shortest path") {
  Rng rng(127);
  BankGraph g = random_graph(10, 0.2, rng);
  Matrix before = floyd_warshall(g);
  // add a random missing edge
  int a = -1, b = -1;
  for (int i = 0; i < 10 && a < 0; ++i)
    for (int j = i + 1; j < 10 && a < 0; ++j)
      if (!g.has_edge(i, j)) {
        a = i;
        b = j;
      }
  REQUIRE(a >= 0);
  g.adjacency[static_cast<std::size_t>(a)].push_back(b);
  g.adjacency[static_cast<std::size_t>(b)].push_back(a);
  Matrix after = floyd_warshall(g);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(after(i, j) <= before(i, j));
}

TEST_CASE("hubs are the top-decile degree nodes") {
  // star: the center has degree 9, leaves degree 1
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < 10; ++i) edges.push_back({0, i});
  BankGraph g = graph_from_edges(10, edges);
  auto hubs = hub_nodes(g);
  REQUIRE(hubs.size() == 1);
  CHECK(hubs[0] == 0);
}
