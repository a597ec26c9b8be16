#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "hetrisk/cli.hpp"
#include "hetrisk/model_io.hpp"
#include "hetrisk/service.hpp"

using namespace hetrisk;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "hetrisk");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hetrisk_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const TempDir& dir() {
  static const TempDir d;
  return d;
}

const std::string& simulated() {
  static const std::string once = [] {
    const auto r = run({"simulate", "--preset", "pbcg", "--scale", "0.3", "--seed", "11", "--out",
                        dir() / "train.csv" + "," + dir() / "valid.csv"});
    REQUIRE(r.code == 0);
    return dir() / "train.csv";
  }();
  return once;
}

}  // namespace

TEST_CASE("every subcommand answers --help with exit 0") {
  for (std::vector<std::string> cmd : std::vector<std::vector<std::string>>{
           {}, {"simulate"}, {"fit"}, {"validate"}, {"bank"}, {"bank", "build"}, {"bank", "inspect"}, {"predict"}, {"serve"}}) {
    cmd.push_back("--help");
    const auto r = run(cmd);
    CHECK(r.code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
}

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"fit", "--method", "available_cases"}).code == kExitUsage);
  CHECK(run({"validate", "--train", simulated()}).code == kExitUsage);
  const auto both = run({"predict", "--psa", "3", "--age", "60"});
  CHECK(both.code == kExitUsage);
  CHECK(Json::parse(both.err.substr(both.err.find('{')))["error"]["kind"] == "usage");
}

TEST_CASE("simulate records the seed and is reproducible") {
  const std::string a = dir() / "a.csv";
  const std::string b = dir() / "b.csv";
  const auto r1 = run({"simulate", "--preset", "pbcg", "--scale", "0.05", "--seed", "5", "--out", a + "," + dir() / "av.csv"});
  const auto r2 = run({"simulate", "--preset", "pbcg", "--scale", "0.05", "--seed", "5", "--out", b + "," + dir() / "bv.csv"});
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  CHECK(r1.err.find("seed: 5") != std::string::npos);
  const std::string ta = read_file(a);
  const std::string tb = read_file(b);
  CHECK(ta.substr(ta.find('\n', ta.find("# seed"))) == tb.substr(tb.find('\n', tb.find("# seed"))));
  CHECK(ta.find("# seed: 5") != std::string::npos);
}

TEST_CASE("fit writes a loadable model and rejects bad input with exit 2") {
  const std::string model = dir() / "m.json";
  const auto r = run({"fit", "--method", "available_cases", "--pattern", "dre", "--train", simulated(), "--out", model, "--seed", "3"});
  REQUIRE(r.code == 0);
  const RiskModel m = load_model(read_file(model));
  CHECK(m.strategy == Strategy::available_cases);
  REQUIRE(m.pattern);
  CHECK(m.pattern->bits() == 1);
  CHECK(Json::parse(read_file(model))["provenance"]["seed"] == 3);

  const auto unknown = run({"fit", "--method", "magic", "--train", simulated(), "--out", model});
  CHECK(unknown.code == kExitData);
  write_file(dir() / "bad.csv", "cohort,psa\nx,1\n");
  CHECK(run({"fit", "--method", "available_cases", "--train", dir() / "bad.csv", "--out", model}).code == kExitData);
}

TEST_CASE("fit without a seed generates and prints one") {
  const auto r = run({"fit", "--method", "missing_indicator", "--train", simulated(), "--out", dir() / "mi.json"});
  REQUIRE(r.code == 0);
  const auto pos = r.err.find("seed: ");
  REQUIRE(pos != std::string::npos);
  const std::uint64_t printed = std::stoull(r.err.substr(pos + 6));
  CHECK(Json::parse(read_file(dir() / "mi.json"))["provenance"]["seed"].get<std::uint64_t>() == printed);
}

TEST_CASE("external validation reports every requested strategy and reruns identically") {
  const std::vector<std::string> args = {"validate", "--train", simulated(), "--test", dir() / "valid.csv",
                                         "--methods", "available_cases,missing_indicator,imputation",
                                         "--imputations", "3", "--cycles", "3", "--seed", "9"};
  auto a = args;
  a.insert(a.end(), {"--out", dir() / "r1.json", "--csv", dir() / "r1.csv", "--predictions", dir() / "p1.csv"});
  auto b = args;
  b.insert(b.end(), {"--out", dir() / "r2.json", "--csv", dir() / "r2.csv", "--predictions", dir() / "p2.csv"});
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  const Json r1 = Json::parse(read_file(dir() / "r1.json"));
  const Json r2 = Json::parse(read_file(dir() / "r2.json"));
  CHECK(r1["report"] == "external_validation");
  CHECK(r1["strategies"].size() == 3);
  CHECK(r1["seed"] == 9);
  Json s1 = r1;
  Json s2 = r2;
  s1.erase("provenance");
  s2.erase("provenance");
  CHECK(s1.dump() == s2.dump());
  CHECK(read_file(dir() / "p1.csv").find("row,cohort,outcome") != std::string::npos);
}

TEST_CASE("bank build, inspect and predict agree with the service") {
  const std::string bank = dir() / "b.bank";
  const auto built = run({"bank", "build", "--train", simulated(), "--out", bank});
  REQUIRE(built.code == 0);
  const auto table = run({"bank", "inspect", "--bank", bank, "--pattern", "dre,volume"});
  REQUIRE(table.code == 0);
  CHECK(table.out.find("odds_ratio") != std::string::npos);
  const auto js = run({"bank", "inspect", "--bank", bank, "--pattern", "3", "--json"});
  REQUIRE(js.code == 0);
  CHECK(Json::parse(js.out)["pattern"] == 3);

  const auto cli = run({"predict", "--bank", bank, "--psa", "6.5", "--age", "67", "--dre", "abnormal", "--volume", "45"});
  REQUIRE(cli.code == 0);
  const auto svc = RiskService::from_file(bank);
  const auto http = svc.predict(R"({"psa": 6.5, "age": 67, "dre": "abnormal", "volume": 45})");
  REQUIRE(http.status == 200);
  CHECK(cli.out == http.body + "\n");

  const auto req = run({"predict", "--bank", bank, "--request", R"({"psa": 6.5, "age": 67, "dre": "abnormal", "volume": 45})"});
  CHECK(req.out == cli.out);

  const auto bad = run({"predict", "--bank", bank, "--age", "67"});
  CHECK(bad.code == kExitData);
  CHECK(bad.err.find("psa") != std::string::npos);
}

TEST_CASE("a damaged bank is rejected with exit 2") {
  std::string bytes = read_file(dir() / "b.bank");
  bytes[bytes.size() / 2] ^= 0x01;
  write_file(dir() / "damaged.bank", bytes);
  const auto r = run({"bank", "inspect", "--bank", dir() / "damaged.bank", "--pattern", "0"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("checksum") != std::string::npos);
}

TEST_CASE("model scoring marks unscorable records NA") {
  const auto r = run({"predict", "--model", dir() / "m.json", "--input", dir() / "valid.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("row,cohort,risk") != std::string::npos);
  const auto single = run({"predict", "--model", dir() / "m.json", "--psa", "5", "--age", "60", "--dre", "normal"});
  REQUIRE(single.code == 0);
  CHECK(Json::parse(single.out)["strategy"] == "available_cases");
  CHECK(run({"predict", "--model", dir() / "m.json", "--psa", "5", "--age", "60"}).code == kExitData);
}
