#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spillover/csv.hpp"

using namespace spillover;
using Json = nlohmann::json;

namespace {

std::string tmp_dir() { return std::string(SPILLOVER_TEST_TMP); }

int run_cli(const std::string& args) {
  std::string cmd = std::string(SPILLOVER_CLI_PATH) + " " + args + " > " + tmp_dir() + "/cli_stdout.txt 2>" +
                    tmp_dir() + "/cli_stderr.txt";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string cli_stderr() { return read_file_bytes(tmp_dir() + "/cli_stderr.txt"); }

Json load_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  Json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("simulate-then-estimate pipeline produces a parameter table") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate dsdm --n 30 --t 24 --tau 0.4 --rho 0.3 --eta -0.1 --beta 0.3 --theta 0.4"
                  " --gamma 0.6 --share 0.5 --t0-col 12 --w-neighbors 4 --seed 11"
                  " --out " + d + "/p.csv --truth " + d + "/truth.json --weights-out " + d + "/w.csv") == 0);
  REQUIRE(run_cli("dsdm --panel " + d + "/p.csv --weights " + d + "/w.csv --outcome roa --estimator mle"
                  " --controls x1 --out " + d + "/fit.json") == 0);
  Json fit = load_json(d + "/fit.json");
  REQUIRE(fit["parameters"].size() == 7);
  CHECK(fit["parameters"][0]["name"] == "tau");
  double tau = fit["parameters"][0]["estimate"];
  double se = fit["parameters"][0]["se"];
  CHECK(std::abs(tau - 0.4) < 4 * se);

  // effects decomposition from the stored fit
  REQUIRE(run_cli("effects --fit " + d + "/fit.json --weights " + d + "/w.csv --reps 400 --seed 2 --out " +
                  d + "/eff.json") == 0);
  Json eff = load_json(d + "/eff.json");
  double direct = eff["direct"], indirect = eff["indirect"], total = eff["total"];
  CHECK(total == Catch::Approx(direct + indirect).margin(1e-10));
}

TEST_CASE("reruns with the same seed are byte-identical and manifested") {
  std::string d = tmp_dir();
  std::string base = "simulate dsdm --n 12 --t 10 --tau 0.3 --rho 0.2 --seed 77 --w-neighbors 3 --truth " +
                     d + "/t_det.json --out ";
  REQUIRE(run_cli(base + d + "/det1.csv") == 0);
  REQUIRE(run_cli(base + d + "/det2.csv") == 0);
  CHECK(read_file_bytes(d + "/det1.csv") == read_file_bytes(d + "/det2.csv"));
  // manifest written beside the result, no timestamps inside
  Json manifest = load_json(d + "/det1.csv.manifest.json");
  CHECK(manifest.contains("config_hash"));
  Json manifest2 = load_json(d + "/det2.csv.manifest.json");
  CHECK(manifest["config_hash"] == manifest2["config_hash"]);
}

TEST_CASE("invalid simulate parameters exit nonzero with the interval message") {
  std::string d = tmp_dir();
  int rc = run_cli("simulate dsdm --n 10 --t 8 --rho 1.5 --seed 1 --out " + d + "/bad.csv");
  CHECK(rc != 0);
  CHECK(cli_stderr().find("admissible") != std::string::npos);
}

TEST_CASE("ingest applies dictionary counting, treatment, winsorization, and filtering") {
  std::string d = tmp_dir();
  {
    std::ofstream raw(d + "/raw.csv");
    raw << "bank,period,ret_a,ret_e,filing\n";
    // b1: mention in 2023Q1 -> treated; b2: never; b3: too short, filtered out
    raw << "b1,2022Q4,1.0,10,routine disclosure\n";
    raw << "b1,2023Q1,1.1,11,we piloted generative AI tools\n";
    raw << "b1,2023Q2,1.2,12,ChatGPT integration continues\n";
    raw << "b1,2023Q3,1.3,13,steady state\n";
    raw << "b2,2022Q4,0.5,5,nothing topical\n";
    raw << "b2,2023Q1,0.6,6,still nothing\n";
    raw << "b2,2023Q2,0.7,7,quiet quarter\n";
    raw << "b2,2023Q3,0.8,8,quiet again\n";
    raw << "b3,2023Q1,9.9,99,one quarter only\n";
  }
  {
    std::ofstream schema(d + "/schema.json");
    schema << R"({"entity":"bank","quarter":"period","roa":"ret_a","roe":"ret_e","text":"filing"})";
  }
  {
    std::ofstream dict(d + "/dict.txt");
    dict << "[core]\ngenerative AI\nChatGPT\n";
  }
  REQUIRE(run_cli("ingest --input " + d + "/raw.csv --schema " + d + "/schema.json --dict " + d +
                  "/dict.txt --treatment absorbing --earliest 2023Q1 --winsorize roa --min-quarters 4"
                  " --required roa,roe --out " + d + "/panel.csv --missing-report " + d + "/miss.csv") == 0);
  Table t = read_delimited(d + "/panel.csv");
  // b3 filtered out: 2 entities x 4 quarters
  CHECK(t.rows.size() == 8);
  int treat_col = t.column("treatment");
  int entity_col = t.column("entity");
  int quarter_col = t.column("quarter");
  REQUIRE(treat_col >= 0);
  int b1_treated = 0;
  for (const auto& row : t.rows)
    if (row[static_cast<std::size_t>(entity_col)] == "b1" && row[static_cast<std::size_t>(treat_col)] == "1")
      ++b1_treated;
  CHECK(b1_treated == 3);  // absorbing from 2023Q1 on
  (void)quarter_col;
}

TEST_CASE("sdid command reports the ATT with weights and excluded entities") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate sdid --n 30 --t 12 --t0-col 8 --effect -2.0 --noise 0.3 --share 0.3"
                  " --seed 19 --out " + d + "/sp.csv --truth " + d + "/st.json") == 0);
  Json truth = load_json(d + "/st.json");
  // ground truth survives the result-file round trip
  CHECK(truth["att"].get<double>() == -2.0);
  CHECK(truth["t0_column"].get<int>() == 8);
  CHECK(truth["treated_rows"].size() > 0);
  // columns run 2023Q1..2025Q4; column 8 is 2025Q1
  REQUIRE(run_cli("sdid --panel " + d + "/sp.csv --outcome roa --t0 2025Q1 --bootstrap 60 --seed 3 --out " +
                  d + "/sdid.json") == 0);
  Json res = load_json(d + "/sdid.json");
  double att = res["full_sample"]["att"];
  double se = res["full_sample"]["se"];
  CHECK(std::abs(att - (-2.0)) < 4 * se + 0.3);
  CHECK(res["full_sample"]["omega"].size() > 0);

  // placebo shift two years earlier stays quiet
  REQUIRE(run_cli("placebo --panel " + d + "/sp.csv --outcome roa --t0 2025Q1 --shift 2024Q1"
                  " --bootstrap 60 --seed 5 --out " + d + "/plc.json") == 0);
  Json plc = load_json(d + "/plc.json");
  double p_att = plc["result"]["att"];
  double p_se = plc["result"]["se"];
  CHECK(std::abs(p_att) < 3 * p_se + 0.2);

  // random placebo returns a permutation p-value
  REQUIRE(run_cli("placebo --panel " + d + "/sp.csv --outcome roa --t0 2025Q1 --random --reps 100"
                  " --seed 7 --out " + d + "/plr.json") == 0);
  Json plr = load_json(d + "/plr.json");
  CHECK(plr["p_value"].get<double>() > 0.0);
  CHECK(plr["permutation_draws"].size() == 100);
}

TEST_CASE("event-study subcommand emits a plot-ready series") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate sdid --n 30 --t 14 --t0-col 9 --effect 0.5 --noise 0.2 --share 0.3"
                  " --seed 23 --out " + d + "/es.csv") == 0);
  REQUIRE(run_cli("sdid event-study --panel " + d + "/es.csv --outcome roa --horizons=-2:2"
                  " --bootstrap 40 --seed 9 --out " + d + "/es.json") == 0);
  Json es = load_json(d + "/es.json");
  REQUIRE(es["event_study"].size() == 5);
  CHECK(es["event_study"][0]["horizon"] == -2);
  CHECK(es["event_study"][4]["horizon"] == 2);
  for (const auto& row : es["event_study"]) {
    CHECK(row.contains("att"));
    CHECK(row.contains("ci_lower"));
    CHECK(row.contains("ci_upper"));
  }
}

TEST_CASE("netrisk emits graph statistics and an edge list") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate dsdm --n 20 --t 10 --seed 31 --share 0.4 --t0-col 5 --out " + d +
                  "/np.csv --weights-out " + d + "/nw.csv") == 0);
  REQUIRE(run_cli("netrisk --panel " + d + "/np.csv --weights " + d + "/nw.csv --threshold auto --out " +
                  d + "/graph.json --edges-out " + d + "/edges.csv"
                  " --coupling-base 0.3 --coupling-delta 0.2 --coupling-overlap 0.5") == 0);
  Json g = load_json(d + "/graph.json");
  CHECK(g["edges"].get<int>() > 0);
  CHECK(g.contains("clustering"));
  CHECK(g.contains("path_length"));
  CHECK(g.contains("coupling"));
  Table edges = read_delimited(d + "/edges.csv");
  CHECK(edges.header == std::vector<std::string>{"source", "target", "weight", "both_adopters"});
  CHECK(edges.rows.size() == static_cast<std::size_t>(g["edges"].get<int>()));
}

TEST_CASE("geographic weights build from ingested coordinates") {
  std::string d = tmp_dir();
  {
    std::ofstream raw(d + "/geo.csv");
    raw << "entity,quarter,roa,roe,lat,lon\n";
    raw << "a,2023Q1,1,10,40.7,-74.0\n"
        << "a,2023Q2,1,10,40.7,-74.0\n"
        << "b,2023Q1,1,10,34.05,-118.24\n"
        << "b,2023Q2,1,10,34.05,-118.24\n"
        << "c,2023Q1,1,10,41.88,-87.63\n"
        << "c,2023Q2,1,10,41.88,-87.63\n";
  }
  {
    std::ofstream schema(d + "/geo_schema.json");
    schema << R"({"lat":"lat","lon":"lon"})";
  }
  REQUIRE(run_cli("ingest --input " + d + "/geo.csv --schema " + d + "/geo_schema.json --out " + d +
                  "/geo_panel.csv") == 0);
  REQUIRE(run_cli("weights --panel " + d + "/geo_panel.csv --kind geographic --out " + d + "/geoW.csv") == 0);
  Table t = read_delimited(d + "/geoW.csv");
  REQUIRE(t.rows.size() == 2);
}

TEST_CASE("custom weights round-trip through the weights command") {
  std::string d = tmp_dir();
  {
    std::ofstream raw(d + "/rawW.csv");
    raw << "0,2,1\n1,0,1\n1,1,0\n";
  }
  REQUIRE(run_cli("weights --kind custom --input " + d + "/rawW.csv --out " + d + "/Wn.csv") == 0);
  Table t = read_delimited(d + "/Wn.csv");
  REQUIRE(t.rows.size() == 2);  // no header: 3 lines total, header consumed one
}

TEST_CASE("unknown flags fail fast") {
  CHECK(run_cli("dsdm --nonsense 1") != 0);
  CHECK(run_cli("placebo --panel missing.csv --t0 2023Q1") != 0);
}

TEST_CASE("bayes estimator writes draws that effects can re-consume") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate dsdm --n 20 --t 16 --tau 0.4 --rho 0.3 --beta 0.3 --theta 0.3 --gamma 0.5"
                  " --share 0.5 --t0-col 8 --w-neighbors 4 --seed 41"
                  " --out " + d + "/bp.csv --weights-out " + d + "/bw.csv") == 0);
  REQUIRE(run_cli("dsdm --panel " + d + "/bp.csv --weights " + d + "/bw.csv --estimator bayes"
                  " --controls x1 --iterations 1500 --burn-in 500 --seed 13"
                  " --out " + d + "/bfit.json --draws-out " + d + "/bdraws.csv") == 0);
  Json fit = load_json(d + "/bfit.json");
  CHECK(fit["estimator"] == "bayes");
  CHECK(fit["diagnostics"].contains("rhat_max"));
  Table draws = read_delimited(d + "/bdraws.csv");
  CHECK(draws.rows.size() == 1000);
  REQUIRE(run_cli("effects --fit " + d + "/bfit.json --draws " + d + "/bdraws.csv --seed 2 --out " + d +
                  "/beff.json") == 0);
  Json eff = load_json(d + "/beff.json");
  CHECK(eff["method"] == "posterior_sim");
}

TEST_CASE("weights can be named by kind directly in estimation commands") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate dsdm --n 16 --t 12 --tau 0.3 --rho 0.2 --seed 47 --out " + d + "/kp.csv") == 0);
  // the simulate default builds the same Gaussian kernel the dsdm command
  // rebuilds from the panel's log_assets when given --weights network
  REQUIRE(run_cli("dsdm --panel " + d + "/kp.csv --weights network --out " + d + "/kfit.json") == 0);
  Json fit = load_json(d + "/kfit.json");
  double tau = fit["parameters"][0]["estimate"];
  CHECK(std::isfinite(tau));
  REQUIRE(run_cli("netrisk --panel " + d + "/kp.csv --weights network --out " + d + "/kg.json") == 0);
}

TEST_CASE("sdid placebo alias and size split both run") {
  std::string d = tmp_dir();
  REQUIRE(run_cli("simulate sdid --n 28 --t 12 --t0-col 8 --effect -1.0 --noise 0.3 --share 0.3"
                  " --seed 53 --out " + d + "/ap.csv") == 0);
  REQUIRE(run_cli("sdid placebo --panel " + d + "/ap.csv --outcome roa --t0 2025Q1 --shift 2024Q1"
                  " --bootstrap 40 --seed 3 --out " + d + "/apl.json") == 0);
  Json plc = load_json(d + "/apl.json");
  CHECK(plc["mode"] == "shift");
  REQUIRE(run_cli("sdid --panel " + d + "/ap.csv --outcome roa --t0 2025Q1 --bootstrap 40 --seed 3"
                  " --size-split --out " + d + "/asplit.json") == 0);
  Json split = load_json(d + "/asplit.json");
  CHECK(split.contains("large"));
  CHECK(split.contains("small"));
}
