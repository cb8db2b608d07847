// pkil: command-line front end.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pkil/annotator.hpp"
#include "pkil/dataset.hpp"
#include "pkil/metrics.hpp"
#include "pkil/model_io.hpp"
#include "pkil/pk_dsl.hpp"
#include "pkil/prompt.hpp"
#include "pkil/review_log.hpp"
#include "pkil/sentiment.hpp"
#include "pkil/service.hpp"
#include "pkil/simd/kernels.hpp"
#include "pkil/synth.hpp"
#include "pkil/trainer.hpp"

namespace {

using namespace pkil;

std::string hint_for(const std::string& code) {
  static const std::map<std::string, std::string> hints = {
      {"file-not-found", "check the path; relative paths resolve against the current directory"},
      {"pk-syntax", "see data/cssrs.pk for the expected conditions:/rules: layout"},
      {"missing-embedding", "embed every post and every condition (cond:<id>) into the store, e.g. with `pkil embed`"},
      {"dimension-mismatch", "all vectors in a store must match the header dim"},
      {"pk-checksum-mismatch", "retrain the model against this process-knowledge file"},
      {"unknown-label", "labels in the data must be produced by some rule of the process knowledge"},
      {"invalid-kernel", "gaussian needs --scale in [-1,1] excluding 0"},
      {"invalid-config", "check the training flags or config file values"},
      {"malformed-record", "each line must be one JSON object; the position is in the message"},
      {"duplicate-id", "ids must be unique within a file"},
      {"replay-miss", "re-record the fixture with --record against a live endpoint"},
      {"transport-failure", "check --endpoint and that the completion server is reachable"},
      {"invalid-template", "the template needs {question} and {post} exactly once each"},
      {"bind-failed", "choose another port with --port or PKIL_PORT"},
      {"no-embedder", "pass --embeddings, or train on a store produced by `pkil embed` or `pkil synth`"},
      {"unreviewed-tasks", "collect more decisions or lower --required"},
  };
  const auto it = hints.find(code);
  return it == hints.end() ? "run `pkil <command> --help` for usage" : it->second;
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<TrainingPoint> training_points(const std::vector<LabeledPost>& posts) {
  std::vector<TrainingPoint> out;
  for (const auto& p : posts) {
    if (!p.label) throw Error("malformed-record", "post '" + p.id + "' has no label");
    out.push_back({p.id, *p.label});
  }
  return out;
}

std::optional<EmbedderSpec> spec_from_store(const EmbeddingStore& store) {
  if (!store.embedder()) return std::nullopt;
  return EmbedderSpec{store.embedder()->kind, store.dim(), store.embedder()->seed};
}

std::unique_ptr<EmbeddingSource> embedder_for(const ThresholdModel& model) {
  if (model.embedder && model.embedder->kind == "hash") {
    return std::make_unique<HashEmbedder>(model.embedder->dim, model.embedder->seed);
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

struct ParsePkArgs {
  std::string pk;
  bool check = false;
};

int run_parse_pk(const ParsePkArgs& a) {
  const auto pk = load_pk(a.pk);
  if (a.check) {
    std::cout << "ok " << pk.condition_count() << " conditions, " << pk.rules().size() << " rules, "
              << pk.checksum() << "\n";
  } else {
    std::cout << serialize_pk(pk);
  }
  return 0;
}

struct EmbedArgs {
  std::string pk;
  std::string data;
  std::string out;
  std::size_t dim = 512;
  std::int64_t seed = 7;
  bool fragments = false;
};

int run_embed(const EmbedArgs& a) {
  const auto pk = load_pk(a.pk);
  const auto posts = load_posts(a.data);
  auto store = embed_corpus(pk, posts, a.dim, a.seed);
  if (a.fragments) {
    for (const auto& p : posts) {
      for (const auto& f : fragment({p.id, p.text})) {
        const auto key = content_key(f.text);
        if (store.contains(key)) continue;
        try {
          store.add(key, hash_embed(f.text, a.dim, a.seed));
        } catch (const Error& e) {
          if (e.code() != "zero-vector") throw;
        }
      }
    }
  }
  save_store(store, a.out);
  std::cerr << "wrote " << store.size() << " vectors (dim " << a.dim << ") to " << a.out << "\n";
  return 0;
}

struct SynthArgs {
  std::string pk;
  SynthConfig cfg;
  std::string out_data;
  std::string out_embeddings;
  std::string out_sentiment;
};

int run_synth(const SynthArgs& a) {
  const auto pk = load_pk(a.pk);
  const auto corpus = synthesize(pk, a.cfg);
  save_posts(corpus.posts, a.out_data);
  save_store(corpus.store, a.out_embeddings);
  if (!a.out_sentiment.empty()) save_sentiment_labels(corpus.sentiment, a.out_sentiment);
  std::cerr << "wrote " << corpus.posts.size() << " posts to " << a.out_data << "\n";
  return 0;
}

struct TrainArgs {
  std::string pk;
  std::string data;
  std::string embeddings;
  std::string config;
  std::string optimizer;
  std::string kernel;
  std::optional<double> scale;
  std::optional<double> grid_step;
  std::optional<double> tau;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::int64_t> seed;
  std::string sentiment;
  std::string out;
  std::string report;
};

int run_train(const TrainArgs& a) {
  const auto pk = load_pk(a.pk);
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (!a.optimizer.empty()) cfg.optimizer = parse_optimizer(a.optimizer);
  if (!a.kernel.empty()) {
    const auto kind = parse_kernel_kind(a.kernel);
    if (kind == KernelKind::gaussian) {
      if (!a.scale) throw Error("invalid-kernel", "the gaussian kernel needs --scale");
      cfg.kernel = KernelConfig::gaussian(*a.scale);
    } else {
      cfg.kernel = KernelConfig::cosine();
    }
  } else if (a.scale) {
    cfg.kernel = KernelConfig::gaussian(*a.scale);
  }
  if (a.grid_step) cfg.grid_step = *a.grid_step;
  if (a.tau) cfg.tau = *a.tau;
  if (a.epochs) cfg.max_epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const auto store = load_store(a.embeddings);
  const auto posts = load_posts(a.data);
  const auto points = training_points(posts);
  auto result = train(pk, points, store, cfg);
  result.model.embedder = spec_from_store(store);
  if (!a.sentiment.empty()) {
    auto fit = fit_gammas(result.model, points, store, load_sentiment_labels(a.sentiment), cfg.grid_step);
    result.model = std::move(fit.model);
  }
  save_model(result.model, a.out);
  if (!a.report.empty()) write_file(a.report, train_report_to_json(result.report, pk).dump(2) + "\n");

  std::printf("optimizer  %s\nkernel     %s\nexamples   %zu\nepochs     %d%s\nfinal loss %.6f\n",
              to_string(cfg.optimizer).c_str(), to_string(cfg.kernel.kind).c_str(), points.size(),
              result.report.epochs_run, result.report.converged ? " (converged)" : "", result.report.final_loss);
  for (std::size_t j = 0; j < pk.condition_count(); ++j) {
    std::printf("  %-4s theta %+.4f gamma %+.4f\n", pk.conditions()[j].id.c_str(), result.model.thetas[j],
                result.model.gammas[j]);
  }
  std::printf("model written to %s\n", a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string embeddings;
  std::string positive_label;
  bool json = false;
};

int run_eval(const EvalArgs& a) {
  const auto model = load_model(a.model);
  const auto store = load_store(a.embeddings);
  const auto posts = load_posts(a.data);
  std::vector<EvalExample> examples;
  for (const auto& p : posts) {
    if (!p.label) throw Error("malformed-record", "post '" + p.id + "' has no label");
    auto vec = store.find(p.id);
    if (!vec) vec = store.find(content_key(p.text));
    if (!vec) throw Error("missing-embedding", "post '" + p.id + "' is missing from " + a.embeddings);
    auto pred = predict(model, *vec, store);
    EvalExample ex;
    ex.id = p.id;
    ex.gold = *p.label;
    ex.predicted = pred.decision.label;
    ex.dist = soft_label_distribution(model, *vec, store);
    ex.evaluations = std::move(pred.evaluations);
    ex.condition_truths = p.conditions;
    examples.push_back(std::move(ex));
  }
  std::optional<std::string> positive;
  if (!a.positive_label.empty()) positive = a.positive_label;
  const auto result = summarize(examples, positive);
  if (a.json) {
    print_json(eval_result_to_json(result));
  } else {
    std::cout << format_eval_table(result);
  }
  return 0;
}

struct AnnotateArgs {
  std::string model;
  std::string post;
  std::string text;
  std::string id;
  std::string embeddings;
  std::string format = "human";
  bool from_fragments = false;
};

int run_annotate(const AnnotateArgs& a) {
  const auto model = load_model(a.model);
  if (a.post.empty() == a.text.empty()) throw Error("invalid-argument", "give exactly one of --post or --text");
  Post post;
  post.text = a.text.empty() ? read_file(a.post) : a.text;
  post.id = !a.id.empty() ? a.id : !a.post.empty() ? std::filesystem::path(a.post).stem().string() : "post";
  const auto format = parse_report_format(a.format);

  auto hash = embedder_for(model);
  std::optional<EmbeddingStore> store;
  std::unique_ptr<EmbeddingSource> source;
  if (!a.embeddings.empty()) {
    store.emplace(load_store(a.embeddings));
    source = std::make_unique<StoreSource>(*store, hash.get());
  } else if (!hash) {
    throw Error("no-embedder", "the model names no built-in embedder; pass --embeddings");
  }
  const EmbeddingSource& src = source ? *source : *hash;
  AnnotateOptions opts;
  opts.label_from_fragments = a.from_fragments;
  std::cout << render_report(annotate(model, post, src, opts), model.pk, format);
  return 0;
}

struct ProposeArgs {
  std::string pk;
  std::string posts;
  std::vector<std::string> embeddings;
  double threshold = kProposalThreshold;
  std::string out;
};

int run_propose(const ProposeArgs& a) {
  const auto pk = load_pk(a.pk);
  const auto posts = load_posts(a.posts);
  std::vector<EmbeddingStore> stores;
  stores.reserve(a.embeddings.size());
  std::vector<NamedStore> named;
  for (const auto& path : a.embeddings) stores.push_back(load_store(path));
  for (std::size_t i = 0; i < stores.size(); ++i) named.push_back({a.embeddings[i], &stores[i]});
  const auto tasks = propose(pk, posts, named, a.threshold);
  std::string out;
  std::size_t mandatory = 0;
  for (const auto& t : tasks) {
    out += task_to_json(t).dump() + "\n";
    if (t.mandatory_edit) ++mandatory;
  }
  write_file(a.out, out);
  std::cerr << "wrote " << tasks.size() << " review tasks (" << mandatory << " need an edit) to " << a.out << "\n";
  return 0;
}

std::vector<ReviewTask> load_tasks(const std::string& path) {
  std::vector<ReviewTask> tasks;
  for_each_json_line(path, [&](std::size_t line, const Json& rec) {
    try {
      tasks.push_back(task_from_json(rec));
    } catch (const Json::exception& e) {
      throw Error("malformed-record", path + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return tasks;
}

struct FinalizeArgs {
  std::string pk;
  std::string log;
  std::string tasks;
  std::size_t required = 3;
  bool skip_unreviewed = false;
  std::string out;
};

int run_finalize(const FinalizeArgs& a) {
  const auto pk = load_pk(a.pk);
  std::vector<ReviewTask> tasks;
  if (!a.log.empty()) {
    if (!std::filesystem::exists(a.log)) throw Error("file-not-found", "cannot open " + a.log);
    ReviewStore store(pk, a.log);
    tasks = store.tasks();
  } else if (!a.tasks.empty()) {
    tasks = load_tasks(a.tasks);
  } else {
    throw Error("invalid-argument", "give --log or --tasks");
  }
  AgreementPolicy policy;
  policy.required_reviewers = a.required;
  policy.skip_unreviewed = a.skip_unreviewed;
  const auto [posts, report] = finalize(pk, tasks, policy);
  export_dataset(posts, a.out);
  print_json(finalize_report_to_json(report));
  return 0;
}

struct PromptArgs {
  std::string pk;
  std::string posts;
  std::string text;
  std::string replay;
  std::string endpoint;
  std::string record;
  std::string tmpl;
  double rate = 0.0;
  double burst = 1.0;
  int retries = 3;
  std::string out;
};

int run_prompt_eval(const PromptArgs& a) {
  const auto pk = load_pk(a.pk);
  const auto tmpl = a.tmpl.empty() ? PromptTemplate::default_template() : PromptTemplate::load(a.tmpl);
  if (a.replay.empty() == a.endpoint.empty()) throw Error("invalid-argument", "give exactly one of --replay or --endpoint");

  std::unique_ptr<CompletionClient> base;
  if (!a.replay.empty()) {
    base = std::make_unique<ReplayClient>(a.replay);
  } else {
    HttpClientConfig cfg;
    cfg.url = a.endpoint;
    cfg.retry.max_attempts = a.retries;
    if (a.rate > 0.0) cfg.limiter = std::make_shared<RateLimiter>(a.rate, a.burst);
    base = std::make_unique<HttpCompletionClient>(cfg);
  }
  std::unique_ptr<RecordingClient> recorder;
  if (!a.record.empty()) recorder = std::make_unique<RecordingClient>(*base, a.record);
  CompletionClient& client = recorder ? static_cast<CompletionClient&>(*recorder) : *base;

  std::vector<LabeledPost> posts;
  if (!a.text.empty()) {
    posts.push_back({"post", a.text, std::nullopt, std::nullopt, nullptr});
  } else if (!a.posts.empty()) {
    posts = load_posts(a.posts);
  } else {
    throw Error("invalid-argument", "give --posts or --text");
  }
  const PromptLogger log = [](const std::string& msg) { std::cerr << "log: " << msg << "\n"; };
  std::string out;
  std::size_t correct = 0;
  std::size_t labelled = 0;
  for (const auto& p : posts) {
    const auto pred = prompt_predict(client, tmpl, pk, p.id, p.text, log);
    if (p.label) {
      ++labelled;
      if (*p.label == pred.decision.label && !pred.decision.no_match()) ++correct;
    }
    out += prompt_prediction_to_json(pred).dump() + "\n";
  }
  if (a.out.empty()) {
    std::cout << out;
  } else {
    write_file(a.out, out);
  }
  if (labelled > 0) {
    std::fprintf(stderr, "accuracy %.4f over %zu labelled posts\n",
                 static_cast<double>(correct) / static_cast<double>(labelled), labelled);
  }
  return 0;
}

struct ServeArgs {
  std::string pk;
  std::string log;
  std::string tasks;
  std::string model;
  std::string embeddings;
  std::string host = "127.0.0.1";
  std::optional<int> port;
  std::size_t required = 3;
};

ReviewService* g_service = nullptr;

int run_serve(const ServeArgs& a) {
  const auto pk = load_pk(a.pk);
  ReviewStore store(pk, a.log);
  if (!a.tasks.empty()) {
    const auto added = store.seed(load_tasks(a.tasks));
    std::cerr << "seeded " << added << " new tasks\n";
  }
  std::optional<ThresholdModel> model;
  std::optional<EmbeddingStore> emb;
  std::unique_ptr<EmbeddingSource> hash;
  std::unique_ptr<EmbeddingSource> source;
  if (!a.model.empty()) {
    model.emplace(load_model(a.model, pk));
    hash = embedder_for(*model);
    if (!a.embeddings.empty()) {
      emb.emplace(load_store(a.embeddings));
      source = std::make_unique<StoreSource>(*emb, hash.get());
    } else if (hash) {
      source = std::move(hash);
    } else {
      throw Error("no-embedder", "the model names no built-in embedder; pass --embeddings");
    }
  }

  ServiceConfig cfg;
  cfg.required_reviewers = a.required;
  if (const char* token = std::getenv(kServiceTokenEnv); token != nullptr && *token != '\0') cfg.token = token;
  int port = 8080;
  if (a.port) {
    port = *a.port;
  } else if (const char* env = std::getenv(kServicePortEnv); env != nullptr && *env != '\0') {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      throw Error("invalid-argument", std::string(kServicePortEnv) + " is not a port number");
    }
  }

  ReviewService service(store, cfg, model ? &*model : nullptr, source.get());
  const int bound = service.bind(a.host, port);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service != nullptr) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service != nullptr) g_service->stop();
  });
  std::cout << "listening on " << a.host << ":" << bound << std::endl;
  service.listen();
  g_service = nullptr;
  return 0;
}

int run_isa() {
  std::cout << "active " << simd::isa_name(simd::active_isa()) << "\n";
  for (auto isa : {simd::Isa::scalar, simd::Isa::avx2, simd::Isa::neon}) {
    std::cout << simd::isa_name(isa) << " " << (simd::available(isa) ? "available" : "unavailable") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pkil: process-knowledge rules over embeddings"};
  app.require_subcommand(1);
  std::function<int()> action;

  ParsePkArgs parse_args;
  auto* parse = app.add_subcommand("parse-pk", "Validate a process-knowledge file and print its canonical form");
  parse->add_option("pk", parse_args.pk, "process-knowledge file")->required();
  parse->add_flag("--check", parse_args.check, "print a one-line summary instead");
  parse->callback([&] { action = [&] { return run_parse_pk(parse_args); }; });

  EmbedArgs embed_args;
  auto* embed = app.add_subcommand("embed", "Hash-embed posts and condition texts into an embedding file");
  embed->add_option("--pk", embed_args.pk, "process-knowledge file")->required();
  embed->add_option("--data", embed_args.data, "posts (JSON lines with id, text)")->required();
  embed->add_option("--out", embed_args.out, "embedding file to write")->required();
  embed->add_option("--dim", embed_args.dim, "vector dimension")->capture_default_str();
  embed->add_option("--seed", embed_args.seed, "hash seed")->capture_default_str();
  embed->add_flag("--fragments", embed_args.fragments, "also embed three-sentence fragments");
  embed->callback([&] { action = [&] { return run_embed(embed_args); }; });

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic corpus and its embeddings");
  synth->add_option("--pk", synth_args.pk, "process-knowledge file")->required();
  synth->add_option("--n", synth_args.cfg.posts, "number of posts")->capture_default_str();
  synth->add_option("--seed", synth_args.cfg.seed, "seed")->capture_default_str();
  synth->add_option("--dim", synth_args.cfg.dim, "embedding dimension")->capture_default_str();
  synth->add_option("--out-data", synth_args.out_data, "posts file to write")->required();
  synth->add_option("--out-embeddings", synth_args.out_embeddings, "embedding file to write")->required();
  synth->add_option("--out-sentiment", synth_args.out_sentiment, "sentiment labels to write");
  synth->callback([&] { action = [&] { return run_synth(synth_args); }; });

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Learn thresholds (and optionally sentiment bands)");
  tr->add_option("--pk", train_args.pk, "process-knowledge file")->required();
  tr->add_option("--data", train_args.data, "labelled posts")->required();
  tr->add_option("--embeddings", train_args.embeddings, "embedding file")->required();
  tr->add_option("--config", train_args.config, "JSON training config; flags override it");
  tr->add_option("--optimizer", train_args.optimizer, "grid | newton");
  tr->add_option("--kernel", train_args.kernel, "cos | gauss");
  tr->add_option("--scale", train_args.scale, "gaussian scale in [-1,1], nonzero");
  tr->add_option("--grid-step", train_args.grid_step, "grid resolution");
  tr->add_option("--tau", train_args.tau, "soft-rule temperature");
  tr->add_option("--epochs", train_args.epochs, "maximum epochs / sweeps");
  tr->add_option("--batch-size", train_args.batch_size, "newton mini-batch size");
  tr->add_option("--seed", train_args.seed, "seed for batch order");
  tr->add_option("--sentiment", train_args.sentiment, "sentiment labels; fits sentiment bands");
  tr->add_option("--out", train_args.out, "model file to write")->required();
  tr->add_option("--report", train_args.report, "write the training report (JSON)");
  tr->callback([&] { action = [&] { return run_train(train_args); }; });

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Accuracy and AUC of a model against labelled posts");
  ev->add_option("--model", eval_args.model, "model file")->required();
  ev->add_option("--data", eval_args.data, "labelled posts")->required();
  ev->add_option("--embeddings", eval_args.embeddings, "embedding file")->required();
  ev->add_option("--positive-label", eval_args.positive_label, "positive class for binary AUC");
  ev->add_flag("--json", eval_args.json, "print JSON instead of a table");
  ev->callback([&] { action = [&] { return run_eval(eval_args); }; });

  AnnotateArgs ann_args;
  auto* ann = app.add_subcommand("annotate", "Explain a post with fragment-level condition tags");
  ann->add_option("--model", ann_args.model, "model file")->required();
  ann->add_option("--post", ann_args.post, "text file holding the post");
  ann->add_option("--text", ann_args.text, "post text inline");
  ann->add_option("--id", ann_args.id, "post id (defaults to the file stem)");
  ann->add_option("--embeddings", ann_args.embeddings, "precomputed embeddings");
  ann->add_option("--format", ann_args.format, "human | structured")->capture_default_str();
  ann->add_flag("--from-fragments", ann_args.from_fragments, "derive the label from the best fragment per condition");
  ann->callback([&] { action = [&] { return run_annotate(ann_args); }; });

  auto* build = app.add_subcommand("build-dataset", "Propose review tasks or finalize reviewed ones");
  build->require_subcommand(1);
  ProposeArgs prop_args;
  auto* prop = build->add_subcommand("propose", "Machine proposals from one or more embedding stores");
  prop->add_option("--pk", prop_args.pk, "process-knowledge file")->required();
  prop->add_option("--posts", prop_args.posts, "posts")->required();
  prop->add_option("--embeddings", prop_args.embeddings, "embedding file (repeatable)")->required();
  prop->add_option("--threshold", prop_args.threshold, "similarity threshold")->capture_default_str();
  prop->add_option("--out", prop_args.out, "tasks file to write")->required();
  prop->callback([&] { action = [&] { return run_propose(prop_args); }; });
  FinalizeArgs fin_args;
  auto* fin = build->add_subcommand("finalize", "Majority-finalize reviewed tasks into a dataset");
  fin->add_option("--pk", fin_args.pk, "process-knowledge file")->required();
  fin->add_option("--log", fin_args.log, "review log");
  fin->add_option("--tasks", fin_args.tasks, "tasks file with decisions");
  fin->add_option("--required", fin_args.required, "decisions needed per task")->capture_default_str();
  fin->add_flag("--skip-unreviewed", fin_args.skip_unreviewed, "leave out tasks with too few decisions");
  fin->add_option("--out", fin_args.out, "dataset file to write")->required();
  fin->callback([&] { action = [&] { return run_finalize(fin_args); }; });

  PromptArgs prompt_args;
  auto* pe = app.add_subcommand("prompt-eval", "Evaluate conditions by prompting a completion endpoint");
  pe->add_option("--pk", prompt_args.pk, "process-knowledge file")->required();
  pe->add_option("--posts", prompt_args.posts, "posts");
  pe->add_option("--text", prompt_args.text, "a single post inline");
  pe->add_option("--replay", prompt_args.replay, "replay fixture");
  pe->add_option("--endpoint", prompt_args.endpoint, "completion URL (token from PKIL_COMPLETION_TOKEN)");
  pe->add_option("--record", prompt_args.record, "append exchanges to this fixture");
  pe->add_option("--template", prompt_args.tmpl, "prompt template file");
  pe->add_option("--rate", prompt_args.rate, "requests per second (0 = unlimited)");
  pe->add_option("--burst", prompt_args.burst, "rate limiter burst")->capture_default_str();
  pe->add_option("--retries", prompt_args.retries, "attempts per request")->capture_default_str();
  pe->add_option("--out", prompt_args.out, "write predictions here instead of stdout");
  pe->callback([&] { action = [&] { return run_prompt_eval(prompt_args); }; });

  ServeArgs serve_args;
  auto* sv = app.add_subcommand("serve", "Run the review and report HTTP service");
  sv->add_option("--pk", serve_args.pk, "process-knowledge file")->required();
  sv->add_option("--log", serve_args.log, "review log (created if absent)")->required();
  sv->add_option("--tasks", serve_args.tasks, "seed tasks from a propose output");
  sv->add_option("--model", serve_args.model, "model for /reports");
  sv->add_option("--embeddings", serve_args.embeddings, "embeddings for /reports");
  sv->add_option("--host", serve_args.host, "bind address")->capture_default_str();
  sv->add_option("--port", serve_args.port, "port (default PKIL_PORT or 8080; 0 picks one)");
  sv->add_option("--required", serve_args.required, "decisions needed per task")->capture_default_str();
  sv->callback([&] { action = [&] { return run_serve(serve_args); }; });

  auto* isa = app.add_subcommand("isa", "Show the SIMD kernels in use");
  isa->callback([&] { action = run_isa; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    std::cerr << "hint: run `pkil --help` or `pkil <command> --help`\n";
    return 2;
  }

  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    std::cerr << "hint: " << hint_for(e.code()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
