#include "pkil/model_io.hpp"

namespace pkil {

Json model_to_json(const ThresholdModel& model) {
  Json doc;
  doc["format"] = "pkil-model";
  doc["version"] = 1;
  doc["pk"] = {{"checksum", model.pk.checksum()}, {"source", serialize_pk(model.pk)}};
  Json kernel{{"kind", to_string(model.kernel.kind)}};
  if (model.kernel.scale) kernel["scale"] = *model.kernel.scale;
  doc["kernel"] = kernel;
  doc["tau"] = model.tau;
  Json thetas = Json::object();
  Json gammas = Json::object();
  for (std::size_t j = 0; j < model.pk.condition_count(); ++j) {
    thetas[model.pk.conditions()[j].id] = model.thetas[j];
    gammas[model.pk.conditions()[j].id] = model.gammas[j];
  }
  doc["thetas"] = thetas;
  doc["gammas"] = gammas;
  if (model.embedder) {
    doc["embedder"] = {{"kind", model.embedder->kind},
                       {"dim", model.embedder->dim},
                       {"seed", model.embedder->seed}};
  }
  const auto& t = model.training;
  doc["training"] = {{"optimizer", t.optimizer}, {"final_loss", t.final_loss},
                     {"epochs", t.epochs},       {"converged", t.converged},
                     {"grid_step", t.grid_step}, {"batch_size", t.batch_size},
                     {"seed", t.seed},           {"examples", t.examples}};
  return doc;
}

ThresholdModel model_from_json(const Json& doc) {
  try {
    if (doc.value("format", std::string()) != "pkil-model") {
      throw Error("invalid-model", "not a pkil model document");
    }
    if (doc.at("version").get<int>() != 1) throw Error("invalid-model", "unsupported model version");

    ThresholdModel model;
    model.pk = parse_pk(doc.at("pk").at("source").get<std::string>());
    const auto stored = doc.at("pk").at("checksum").get<std::string>();
    if (stored != model.pk.checksum()) {
      throw Error("pk-checksum-mismatch", "embedded process knowledge does not match its checksum");
    }

    const auto& kernel = doc.at("kernel");
    model.kernel.kind = parse_kernel_kind(kernel.at("kind").get<std::string>());
    if (kernel.contains("scale")) model.kernel.scale = kernel.at("scale").get<double>();
    model.tau = doc.at("tau").get<double>();

    const std::size_t m = model.pk.condition_count();
    model.thetas.assign(m, 0.0);
    model.gammas.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const auto& id = model.pk.conditions()[j].id;
      model.thetas[j] = doc.at("thetas").at(id).get<double>();
      model.gammas[j] = doc.at("gammas").at(id).get<double>();
    }
    if (doc.contains("embedder")) {
      const auto& e = doc.at("embedder");
      model.embedder = EmbedderSpec{e.at("kind").get<std::string>(), e.at("dim").get<std::size_t>(),
                                    e.at("seed").get<std::int64_t>()};
    }
    if (doc.contains("training")) {
      const auto& t = doc.at("training");
      model.training.optimizer = t.value("optimizer", std::string());
      model.training.final_loss = t.value("final_loss", 0.0);
      model.training.epochs = t.value("epochs", 0);
      model.training.converged = t.value("converged", false);
      model.training.grid_step = t.value("grid_step", 0.0);
      model.training.batch_size = t.value("batch_size", 0);
      model.training.seed = t.value("seed", std::int64_t{0});
      model.training.examples = t.value("examples", std::size_t{0});
    }
    model.validate();
    return model;
  } catch (const Json::exception& e) {
    throw Error("invalid-model", std::string("malformed model document: ") + e.what());
  }
}

void save_model(const ThresholdModel& model, const std::filesystem::path& path) {
  write_file(path, model_to_json(model).dump(2) + "\n");
}

ThresholdModel load_model(const std::filesystem::path& path) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error("invalid-model", path.string() + ": " + e.what());
  }
  return model_from_json(doc);
}

ThresholdModel load_model(const std::filesystem::path& path, const ProcessKnowledge& pk) {
  auto model = load_model(path);
  if (model.pk.checksum() != pk.checksum()) {
    throw Error("pk-checksum-mismatch",
                "model was trained against different process knowledge (" + model.pk.checksum() +
                    " vs " + pk.checksum() + ")");
  }
  return model;
}

}  // namespace pkil
