#pragma once
// Shared fixtures for the unit tests.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "sumask/sumask.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using namespace sumask;

inline fs::path source_dir() { return fs::path(SUMASK_SOURCE_DIR); }
inline std::string source_path(const std::string& rel) { return (source_dir() / rel).string(); }

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "sumask-test-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

// Runs the sumask binary with `args` appended (already shell-quoted).
inline CliResult run_cli(const std::string& args) {
  const std::string command = std::string("\"") + SUMASK_CLI_PATH + "\" " + args + " 2>&1";
  CliResult r;
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline RelationLabel label(const std::string& id, const std::string& name = "", bool nota = false) {
  return {id, name.empty() ? id : name, std::nullopt, nota};
}

// A/B/C relations plus a NoTA class.
inline RelationSchema abc_schema(bool with_nota = true) {
  std::vector<RelationLabel> labels{label("A", "alpha"), label("B", "beta"), label("C", "gamma")};
  if (with_nota) labels.push_back(label("NA", "no relation", true));
  return RelationSchema(labels);
}

inline Instance pair_instance(const std::string& id, const std::string& text, const std::string& s, const std::string& o,
                              const std::optional<std::string>& relation) {
  Instance in;
  in.id = id;
  in.text = text;
  in.entities = {{s, std::nullopt, std::nullopt}, {o, std::nullopt, std::nullopt}};
  if (relation) {
    in.gold_triples = {{0, *relation, 1}};
    in.gold_relation = relation;
  }
  return in;
}

// Wires a completion provider, an embedder and an optional cache together.
struct Harness {
  std::shared_ptr<CompletionProvider> provider;
  std::shared_ptr<EmbeddingProvider> embedder;
  std::shared_ptr<ResponseCache> cache;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<EmbeddingGateway> embeddings;
  RelationSchema schema;
  std::unique_ptr<PipelineContext> ctx;

  Harness(std::shared_ptr<CompletionProvider> p, RelationSchema s, std::shared_ptr<EmbeddingProvider> e = nullptr,
          std::shared_ptr<ResponseCache> c = nullptr, const TemplateSet* templates = nullptr)
      : provider(std::move(p)),
        embedder(e ? std::move(e) : std::make_shared<HashEmbedder>(16)),
        cache(std::move(c)),
        schema(std::move(s)) {
    gateway = std::make_unique<Gateway>(provider, cache);
    embeddings = std::make_unique<EmbeddingGateway>(embedder, cache);
    ctx = std::make_unique<PipelineContext>(PipelineContext{*gateway, *embeddings, schema, PromptRegistry::builtin(), templates});
  }
};

// A provider/embedder pair with dials for each stage. Sample i of a stage is
// embedded as the 1-D point i * spread * scale, so with k=2 the dispersion of
// that stage is exactly spread * scale.
struct Controlled {
  std::set<std::string> yes;                      // relation display names answered Yes
  std::map<std::string, double> question_spread;  // per display name, default 1
  double summary_spread = 1.0;
  double answer_spread = 1.0;
  double scale = 1.0;
  std::vector<int> permutation;  // optional relabelling of sample indices

  int slot(int i) const { return permutation.empty() ? i : permutation.at(static_cast<std::size_t>(i)); }

  std::shared_ptr<FunctionProvider> provider() const {
    return std::make_shared<FunctionProvider>("mock:controlled", [this](const CompletionRequest& r, int i) -> std::string {
      switch (r.prompt.stage) {
        case Stage::summarize: return "s#" + std::to_string(slot(i));
        case Stage::question: return "q#" + r.prompt.slots.at("relation") + "#" + std::to_string(slot(i));
        case Stage::answer: {
          const auto& q = r.prompt.slots.at("question");
          const auto name = q.substr(2, q.rfind('#') - 2);
          return std::string(yes.count(name) ? "Yes" : "No") + " a#" + name + "#" + std::to_string(slot(i));
        }
        default: return "none of the above";
      }
    });
  }

  std::shared_ptr<EmbeddingProvider> embedder() const {
    struct Embedder : EmbeddingProvider {
      const Controlled* c;
      explicit Embedder(const Controlled* owner) : c(owner) {}
      std::string id() const override { return "mock:controlled"; }
      EmbeddingBatch embed(const std::vector<std::string>& texts) override {
        EmbeddingBatch b;
        for (const auto& t : texts) {
          const auto last = t.rfind('#');
          const double i = std::stod(t.substr(last + 1));
          double spread = c->answer_spread;
          if (t.starts_with("s#")) spread = c->summary_spread;
          if (t.starts_with("q#")) {
            const auto name = t.substr(2, last - 2);
            spread = c->question_spread.count(name) ? c->question_spread.at(name) : 1.0;
          }
          b.vectors.push_back({i * spread * c->scale});
        }
        return b;
      }
    };
    return std::make_shared<Embedder>(this);
  }
};

}  // namespace testing_support
