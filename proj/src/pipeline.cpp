#include "no2/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "no2/csv.hpp"
#include "no2/errors.hpp"
#include "no2/version.hpp"

namespace fs = std::filesystem;

namespace no2 {
namespace pipeline {

namespace {

std::string tool_string() {
  return std::string(kToolName) + " " + kToolVersion;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on")
    return true;
  if (value == "false" || value == "0" || value == "no" || value == "off")
    return false;
  throw InputError("config key '" + key + "': invalid boolean '" + value +
                   "'");
}

long parse_int(const std::string& value, const std::string& key) {
  return csv::parse_long(value, "config key '" + key + "'");
}

double parse_num(const std::string& value, const std::string& key) {
  return csv::parse_double(value, "config key '" + key + "'");
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open file for writing: " + path);
  out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  return j;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key,
                      const std::string& value) {
  if (key == "monitors") config.monitors = value;
  else if (key == "sites") config.sites = value;
  else if (key == "roads") config.roads = value;
  else if (key == "split_file") config.split_file = value;
  else if (key == "rings") config.rings = value;
  else if (key == "target_len") config.target_len = parse_num(value, key);
  else if (key == "exposure_scale")
    config.exposure_scale = parse_num(value, key);
  else if (key == "idw_power") config.idw_power = parse_num(value, key);
  else if (key == "min_hours")
    config.min_hours = static_cast<int>(parse_int(value, key));
  else if (key == "model") config.model = value;
  else if (key == "reml") config.reml = parse_bool(value, key);
  else if (key == "include_traffic")
    config.include_traffic = parse_bool(value, key);
  else if (key == "chains")
    config.chains = static_cast<int>(parse_int(value, key));
  else if (key == "iters")
    config.iters = static_cast<int>(parse_int(value, key));
  else if (key == "burnin")
    config.burnin = static_cast<int>(parse_int(value, key));
  else if (key == "thin") config.thin = static_cast<int>(parse_int(value, key));
  else if (key == "seed")
    config.seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "predict_mode") config.predict_mode = value;
  else if (key == "out_dir") config.out_dir = value;
  else
    throw InputError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& path) {
  RunConfig config;
  csv::LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    auto pos = line.find('=');
    if (pos == std::string::npos)
      throw InputError(reader.where() + ": expected 'key = value'");
    std::string key(csv::trim(std::string_view(line).substr(0, pos)));
    std::string value(csv::trim(std::string_view(line).substr(pos + 1)));
    try {
      set_config_value(config, key, value);
    } catch (const InputError& e) {
      throw InputError(reader.where() + ": " + e.what());
    }
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative())
      p = (base / p).lexically_normal().string();
  };
  resolve(config.monitors);
  resolve(config.sites);
  resolve(config.roads);
  resolve(config.split_file);
  resolve(config.out_dir);
  return config;
}

std::string canonical_config(const RunConfig& c) {
  // out_dir is deliberately omitted: the hash identifies the computation,
  // not where its artifacts land.
  std::ostringstream out;
  out << "burnin=" << c.burnin << "\n";
  out << "chains=" << c.chains << "\n";
  out << "exposure_scale=" << csv::format_double(c.exposure_scale) << "\n";
  out << "idw_power=" << csv::format_double(c.idw_power) << "\n";
  out << "include_traffic=" << (c.include_traffic ? "true" : "false") << "\n";
  out << "iters=" << c.iters << "\n";
  out << "min_hours=" << c.min_hours << "\n";
  out << "model=" << c.model << "\n";
  out << "monitors=" << c.monitors << "\n";
  out << "predict_mode=" << c.predict_mode << "\n";
  out << "reml=" << (c.reml ? "true" : "false") << "\n";
  out << "rings=" << c.rings << "\n";
  out << "roads=" << c.roads << "\n";
  out << "seed=" << c.seed << "\n";
  out << "sites=" << c.sites << "\n";
  out << "split_file=" << c.split_file << "\n";
  out << "target_len=" << csv::format_double(c.target_len) << "\n";
  out << "thin=" << c.thin << "\n";
  return out.str();
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char byte : data) {
    hash ^= byte;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string config_hash_hex(const RunConfig& config) {
  std::uint64_t h = fnv1a(canonical_config(config));
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

traffic::RingSpec parse_rings(const std::string& spec) {
  if (spec == "single") return traffic::RingSpec::single_step();
  if (spec == "multi") return traffic::RingSpec::multi_step();
  std::vector<double> bounds;
  for (auto field : csv::split(spec, ','))
    bounds.push_back(csv::parse_double(field, "ring boundaries"));
  return traffic::RingSpec::custom(std::move(bounds));
}

std::vector<std::string> load_split(const std::string& path) {
  nlohmann::json j = read_json_file(path);
  if (!j.contains("validation_site_ids"))
    throw InputError(path + ": no validation_site_ids field");
  std::vector<std::string> ids;
  for (const auto& v : j["validation_site_ids"]) {
    if (!v.is_string())
      throw InputError(path + ": validation_site_ids must be strings");
    ids.push_back(v.get<std::string>());
  }
  return ids;
}

ingest::Meta artifact_meta(const RunConfig& config) {
  return {{"tool", tool_string()},
          {"seed", std::to_string(config.seed)},
          {"config", config_hash_hex(config)}};
}

// ---- artifact files -------------------------------------------------------

void write_exposure(const std::string& path,
                    const std::vector<traffic::ExposureVector>& exposures,
                    const ingest::Meta& meta) {
  const std::size_t k = exposures.empty() ? 0 : exposures.front().w.size();
  csv::Writer out(path, meta);
  std::string header = "site_id";
  for (std::size_t i = 1; i <= k; ++i) header += ",w_" + std::to_string(i);
  out.line(header);
  for (const auto& e : exposures) {
    if (e.w.size() != k)
      throw InputError("exposure vector for " + e.site_id +
                       " has inconsistent ring count");
    std::string row = e.site_id;
    for (double v : e.w) row += "," + csv::format_double(v);
    out.line(row);
  }
}

std::vector<traffic::ExposureVector> read_exposure(const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw InputError(path + ": empty file");
  auto header = csv::split(line, ',');
  if (header.empty() || header[0] != "site_id")
    throw InputError(reader.where() + ": expected site_id header");
  const std::size_t k = header.size() - 1;
  for (std::size_t i = 1; i <= k; ++i)
    if (header[i] != "w_" + std::to_string(i))
      throw InputError(reader.where() + ": unexpected column '" +
                       std::string(header[i]) + "'");
  std::vector<traffic::ExposureVector> out;
  while (reader.next(line)) {
    auto fields = csv::split(line, ',');
    if (fields.size() != k + 1)
      throw InputError(reader.where() + ": expected " + std::to_string(k + 1) +
                       " fields");
    traffic::ExposureVector e;
    e.site_id = std::string(fields[0]);
    for (std::size_t i = 1; i <= k; ++i)
      e.w.push_back(csv::parse_double(fields[i], reader.where()));
    out.push_back(std::move(e));
  }
  return out;
}

void write_exposure_sidecar(const std::string& path,
                            const traffic::RingSpec& rings, double target_len,
                            double exposure_scale, const RunConfig& config) {
  nlohmann::json j;
  j["_meta"] = {{"tool", tool_string()},
                {"seed", config.seed},
                {"config", config_hash_hex(config)}};
  j["rings_m"] = rings.boundaries;
  j["target_len_m"] = target_len;
  j["exposure_scale"] = exposure_scale;
  write_json_file(path, j);
}

void write_daily_idw(const std::string& path, const DailyIdw& values,
                     const ingest::Meta& meta) {
  csv::Writer out(path, meta);
  out.line("site_id,date,no2_ppb");
  for (const auto& [site, series] : values)
    for (const auto& [date, v] : series)
      out.line(site + "," + date.to_string() + "," + csv::format_double(v));
}

DailyIdw read_daily_idw(const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw InputError(path + ": empty file");
  csv::expect_header(line, "site_id,date,no2_ppb", reader.where());
  DailyIdw out;
  while (reader.next(line)) {
    auto fields = csv::split(line, ',');
    if (fields.size() != 3)
      throw InputError(reader.where() + ": expected 3 fields");
    Date d = Date::parse(fields[1]);
    double v = csv::parse_double(fields[2], reader.where());
    auto [it, fresh] = out[std::string(fields[0])].emplace(d, v);
    (void)it;
    if (!fresh)
      throw InputError(reader.where() + ": duplicate (site, date) entry");
  }
  return out;
}

void write_period_covariates(
    const std::string& path,
    const std::vector<interp::PeriodCovariate>& covariates,
    const ingest::Meta& meta) {
  csv::Writer out(path, meta);
  out.line("site_id,period_start,period_end,u_ppb,x_log");
  for (const auto& c : covariates)
    out.line(c.site_id + "," + c.period_start.to_string() + "," +
             c.period_end.to_string() + "," + csv::format_double(c.u_ppb) +
             "," + csv::format_double(c.x_log));
}

std::vector<interp::PeriodCovariate> read_period_covariates(
    const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw InputError(path + ": empty file");
  csv::expect_header(line, "site_id,period_start,period_end,u_ppb,x_log",
                     reader.where());
  std::vector<interp::PeriodCovariate> out;
  while (reader.next(line)) {
    auto fields = csv::split(line, ',');
    if (fields.size() != 5)
      throw InputError(reader.where() + ": expected 5 fields");
    interp::PeriodCovariate c;
    c.site_id = std::string(fields[0]);
    c.period_start = Date::parse(fields[1]);
    c.period_end = Date::parse(fields[2]);
    c.u_ppb = csv::parse_double(fields[3], reader.where());
    c.x_log = csv::parse_double(fields[4], reader.where());
    out.push_back(std::move(c));
  }
  return out;
}

// ---- fit artifacts --------------------------------------------------------

namespace {

nlohmann::json fit_meta(const RunConfig& config) {
  return {{"tool", tool_string()},
          {"seed", config.seed},
          {"config", config_hash_hex(config)}};
}

nlohmann::json settings_json(const RunConfig& config) {
  nlohmann::json s;
  s["rings_m"] = parse_rings(config.rings).boundaries;
  s["target_len_m"] = config.target_len;
  s["exposure_scale"] = config.exposure_scale;
  s["idw_power"] = config.idw_power;
  s["min_hours"] = config.min_hours;
  s["include_traffic"] = config.include_traffic;
  return s;
}

nlohmann::json vif_json(const fit::GroupedDesign& design) {
  nlohmann::json v;
  if (design.traffic_dim >= 1) {
    auto vifs = fit::vif(design);
    for (std::size_t k = 0; k < vifs.size(); ++k)
      v["w" + std::to_string(k + 1)] = vifs[k];
  }
  return v;
}

}  // namespace

void write_fit_linear(const std::string& dir, const fit::LinearFit& fit,
                      const fit::GroupedDesign& design,
                      const RunConfig& config) {
  nlohmann::json j;
  j["_meta"] = fit_meta(config);
  j["model"] = "linear";
  j["settings"] = settings_json(config);
  j["n_rows"] = fit.n_rows;
  j["n_sites"] = design.n_sites();
  auto names = design.coef_names();
  nlohmann::json coefs = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    coefs.push_back({{"name", names[i]},
                     {"estimate", fit.coef(i)},
                     {"se", fit.se[i]},
                     {"t", fit.t_value[i]},
                     {"p", fit.p_value[i]},
                     {"df", fit.df_residual}});
  }
  j["coefficients"] = coefs;
  j["sigma2"] = fit.sigma2;
  j["r2"] = fit.r2;
  j["adjusted_r2"] = fit.adjusted_r2;
  j["df_residual"] = fit.df_residual;
  auto vif = vif_json(design);
  if (!vif.empty()) j["vif"] = vif;
  write_json_file((fs::path(dir) / "fit.json").string(), j);
}

void write_fit_longitudinal(const std::string& dir, const fit::MixedFit& fit,
                            const fit::GroupedDesign& design,
                            const RunConfig& config) {
  nlohmann::json j;
  j["_meta"] = fit_meta(config);
  j["model"] = "longitudinal";
  j["settings"] = settings_json(config);
  j["n_rows"] = fit.n_rows;
  j["n_sites"] = fit.n_sites;
  auto names = design.coef_names();
  std::vector<double> est = {fit.beta0, fit.beta1};
  est.insert(est.end(), fit.gamma.begin(), fit.gamma.end());
  nlohmann::json coefs = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    coefs.push_back({{"name", names[i]},
                     {"estimate", est[i]},
                     {"se", fit.se[i]},
                     {"t", fit.t_value[i]},
                     {"p", fit.p_value[i]},
                     {"df", fit.df[i]}});
  }
  j["coefficients"] = coefs;
  j["sigma_b2"] = fit.sigma_b2;
  j["sigma_y2"] = fit.sigma_y2;
  j["loglik"] = fit.loglik;
  j["reml"] = fit.reml;
  j["df_convention"] =
      "within-varying terms and the intercept: n_rows - n_sites - q_within; "
      "site-constant terms: n_sites - q_between - 1";
  nlohmann::json blups;
  for (const auto& [id, b] : fit.blups) blups[id] = b;
  j["blups"] = blups;
  auto vif = vif_json(design);
  if (!vif.empty()) j["vif"] = vif;
  write_json_file((fs::path(dir) / "fit.json").string(), j);
}

void write_fit_spatial(const std::string& dir,
                       const spatial::SpatialPosterior& posterior,
                       const fit::GroupedDesign& design,
                       const RunConfig& config) {
  nlohmann::json j;
  j["_meta"] = fit_meta(config);
  j["model"] = "spatial";
  j["settings"] = settings_json(config);
  j["n_rows"] = design.n_rows();
  j["n_sites"] = design.n_sites();
  j["mcmc"] = {{"chains", config.chains},
               {"iters", config.iters},
               {"burnin", config.burnin},
               {"thin", config.thin},
               {"seed", config.seed}};
  j["distance_unit"] = "km";
  j["phi_max_km"] = posterior.phi_max;
  j["coef_names"] = posterior.coef_names;

  auto summary_json = [](const spatial::ParamSummary& s) {
    return nlohmann::json{{"mean", s.mean},
                          {"sd", s.sd},
                          {"q025", s.q025},
                          {"q500", s.q500},
                          {"q975", s.q975}};
  };
  nlohmann::json post;
  for (std::size_t c = 0; c < posterior.coef_names.size(); ++c)
    post[posterior.coef_names[c]] = summary_json(posterior.theta_summary(c));
  post["sigma_b2"] = summary_json(spatial::summarize(posterior.sigma_b2_draws));
  post["sigma_y2"] = summary_json(spatial::summarize(posterior.sigma_y2_draws));
  post["phi"] = summary_json(spatial::summarize(posterior.phi_draws));
  j["posterior"] = post;

  nlohmann::json sites;
  sites["ids"] = posterior.site_ids;
  std::vector<double> xs, ys;
  for (const auto& p : posterior.site_locations) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  sites["x_m"] = xs;
  sites["y_m"] = ys;
  j["sites"] = sites;

  // Posterior mean intercepts, for semivariograms and marginal prediction.
  if (!posterior.b0_draws.empty()) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(posterior.site_ids.size()));
    for (const auto& d : posterior.b0_draws) acc += d.b0;
    acc /= static_cast<double>(posterior.b0_draws.size());
    nlohmann::json b0;
    for (std::size_t i = 0; i < posterior.site_ids.size(); ++i)
      b0[posterior.site_ids[i]] = acc(static_cast<Eigen::Index>(i));
    j["b0_mean"] = b0;
  }

  j["acceptance_rate"] = posterior.acceptance_rate;
  j["warnings"] = posterior.warnings;
  j["draws_file"] = "draws.csv";
  j["b0_draws_file"] = "b0_draws.csv";
  auto vif = vif_json(design);
  if (!vif.empty()) j["vif"] = vif;
  write_json_file((fs::path(dir) / "fit.json").string(), j);

  const ingest::Meta meta = artifact_meta(config);
  {
    csv::Writer out((fs::path(dir) / "draws.csv").string(), meta);
    std::string header = "chain,iteration";
    for (const auto& n : posterior.coef_names) header += "," + n;
    header += ",sigma_b2,sigma_y2,phi";
    out.line(header);
    const std::size_t chains =
        std::max<std::size_t>(posterior.acceptance_rate.size(), 1);
    const std::size_t kept = posterior.n_draws() / chains;
    for (std::size_t r = 0; r < posterior.n_draws(); ++r) {
      const std::size_t chain = kept > 0 ? r / kept : 0;
      const std::size_t iter =
          static_cast<std::size_t>(config.burnin) + (kept > 0 ? r % kept : r);
      std::string row = std::to_string(chain) + "," + std::to_string(iter);
      for (Eigen::Index c = 0; c < posterior.theta_draws.cols(); ++c)
        row += "," + csv::format_double(
                         posterior.theta_draws(static_cast<Eigen::Index>(r), c));
      row += "," + csv::format_double(posterior.sigma_b2_draws[r]);
      row += "," + csv::format_double(posterior.sigma_y2_draws[r]);
      row += "," + csv::format_double(posterior.phi_draws[r]);
      out.line(row);
    }
  }
  {
    csv::Writer out((fs::path(dir) / "b0_draws.csv").string(), meta);
    std::string header = "chain,iteration,phi";
    for (const auto& id : posterior.site_ids) header += "," + id;
    out.line(header);
    for (const auto& d : posterior.b0_draws) {
      std::string row = std::to_string(d.chain) + "," +
                        std::to_string(d.iteration) + "," +
                        csv::format_double(d.phi);
      for (Eigen::Index i = 0; i < d.b0.size(); ++i)
        row += "," + csv::format_double(d.b0(i));
      out.line(row);
    }
  }
}

predict::TrainedModel load_model(const std::string& fit_json_path) {
  nlohmann::json j = read_json_file(fit_json_path);
  if (!j.contains("model"))
    throw InputError(fit_json_path + ": no model field");
  const std::string kind = j["model"].get<std::string>();
  predict::TrainedModel m;

  if (kind == "linear" || kind == "longitudinal") {
    m.kind = kind == "linear" ? predict::TrainedModel::Kind::linear
                              : predict::TrainedModel::Kind::longitudinal;
    if (!j.contains("coefficients"))
      throw InputError(fit_json_path + ": no coefficients");
    for (const auto& c : j["coefficients"])
      m.theta.push_back(c["estimate"].get<double>());
    if (m.theta.size() < 2)
      throw InputError(fit_json_path + ": fewer than 2 coefficients");
    m.traffic_dim = m.theta.size() - 2;
    if (kind == "longitudinal" && j.contains("blups"))
      for (const auto& [id, b] : j["blups"].items())
        m.blups[id] = b.get<double>();
    return m;
  }

  if (kind != "spatial")
    throw InputError(fit_json_path + ": unknown model '" + kind + "'");
  m.kind = predict::TrainedModel::Kind::spatial;
  const auto& post = j.at("posterior");
  for (const auto& name : j.at("coef_names"))
    m.theta.push_back(post.at(name.get<std::string>()).at("mean").get<double>());
  m.traffic_dim = m.theta.size() - 2;
  m.sigma_b2 = post.at("sigma_b2").at("mean").get<double>();
  const auto& sites = j.at("sites");
  m.site_ids = sites.at("ids").get<std::vector<std::string>>();
  auto xs = sites.at("x_m").get<std::vector<double>>();
  auto ys = sites.at("y_m").get<std::vector<double>>();
  if (xs.size() != m.site_ids.size() || ys.size() != m.site_ids.size())
    throw InputError(fit_json_path + ": site coordinate lengths differ");
  for (std::size_t i = 0; i < xs.size(); ++i)
    m.site_locations.push_back({xs[i], ys[i]});

  const std::string draws_name =
      j.value("b0_draws_file", std::string("b0_draws.csv"));
  const std::string draws_path =
      (fs::path(fit_json_path).parent_path() / draws_name).string();
  csv::LineReader reader(draws_path);
  std::string line;
  if (!reader.next(line)) throw InputError(draws_path + ": empty file");
  auto header = csv::split(line, ',');
  if (header.size() != m.site_ids.size() + 3 || header[0] != "chain" ||
      header[1] != "iteration" || header[2] != "phi")
    throw InputError(reader.where() + ": unexpected header");
  for (std::size_t i = 0; i < m.site_ids.size(); ++i)
    if (header[i + 3] != m.site_ids[i])
      throw InputError(reader.where() + ": site order differs from fit.json");
  while (reader.next(line)) {
    auto fields = csv::split(line, ',');
    if (fields.size() != m.site_ids.size() + 3)
      throw InputError(reader.where() + ": wrong field count");
    spatial::B0Draw d;
    d.chain = static_cast<int>(csv::parse_long(fields[0], reader.where()));
    d.iteration = static_cast<int>(csv::parse_long(fields[1], reader.where()));
    d.phi = csv::parse_double(fields[2], reader.where());
    d.b0.resize(static_cast<Eigen::Index>(m.site_ids.size()));
    for (std::size_t i = 0; i < m.site_ids.size(); ++i)
      d.b0(static_cast<Eigen::Index>(i)) =
          csv::parse_double(fields[i + 3], reader.where());
    m.b0_draws.push_back(std::move(d));
  }
  if (m.b0_draws.empty())
    throw InputError(draws_path + ": no intercept draws");
  m.prepare_kriging();
  return m;
}

void write_daily_predictions(
    const std::string& path,
    const std::vector<predict::PredictionRecord>& records,
    const ingest::Meta& meta) {
  csv::Writer out(path, meta);
  out.line("site_id,date,no2_ppb");
  for (const auto& r : records)
    out.line(r.site_id + "," + r.date.to_string() + "," +
             csv::format_double(r.predicted));
}

void write_period_predictions(
    const std::string& path,
    const std::vector<predict::PeriodPrediction>& periods,
    const ingest::Meta& meta) {
  csv::Writer out(path, meta);
  out.line("site_id,period_start,period_end,p_ppb");
  for (const auto& p : periods)
    out.line(p.site_id + "," + p.period_start.to_string() + "," +
             p.period_end.to_string() + "," + csv::format_double(p.p_ppb));
}

std::vector<predict::PeriodPrediction> read_period_predictions(
    const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw InputError(path + ": empty file");
  csv::expect_header(line, "site_id,period_start,period_end,p_ppb",
                     reader.where());
  std::vector<predict::PeriodPrediction> out;
  while (reader.next(line)) {
    auto fields = csv::split(line, ',');
    if (fields.size() != 4)
      throw InputError(reader.where() + ": expected 4 fields");
    predict::PeriodPrediction p;
    p.site_id = std::string(fields[0]);
    p.period_start = Date::parse(fields[1]);
    p.period_end = Date::parse(fields[2]);
    p.p_ppb = csv::parse_double(fields[3], reader.where());
    out.push_back(std::move(p));
  }
  return out;
}

void write_validation(const std::string& path,
                      const validate::ValidationReport& report,
                      const RunConfig& config) {
  nlohmann::json j;
  j["_meta"] = fit_meta(config);
  j["model"] = config.model;
  j["predict_mode"] = config.predict_mode;
  j["alpha0"] = report.alpha0;
  j["alpha0_se"] = report.se0;
  j["alpha0_t"] = report.t0;
  j["alpha0_p"] = report.p0;
  j["alpha1"] = report.alpha1;
  j["alpha1_se"] = report.se1;
  j["alpha1_t"] = report.t1;
  j["alpha1_p"] = report.p1;
  j["predictive_r2"] = report.predictive_r2;
  j["rmse_ppb"] = report.rmse;
  j["n_sites"] = report.n_sites;
  j["n_obs"] = report.n_obs;
  write_json_file(path, j);
}

void write_semivariogram(const std::string& path,
                         const validate::Semivariogram& sv,
                         const ingest::Meta& meta) {
  ingest::Meta full = meta;
  full.push_back({"bin_width_km", csv::format_double(sv.bin_width_km)});
  full.push_back({"max_lag_km", csv::format_double(sv.max_lag_km)});
  csv::Writer out(path, full);
  out.line("bin_center_km,semivariance,pair_count");
  for (std::size_t i = 0; i < sv.bin_center_km.size(); ++i)
    out.line(csv::format_double(sv.bin_center_km[i]) + "," +
             csv::format_double(sv.semivariance[i]) + "," +
             std::to_string(sv.pair_count[i]));
}

// ---- stages ---------------------------------------------------------------

DailyIdw compute_daily_idw(const std::vector<Site>& sites,
                           const std::vector<interp::DailySeries>& series,
                           double power) {
  DailyIdw out;
  for (const auto& site : sites) {
    auto& per_site = out[site.site_id];
    for (const auto& obs : site.observations) {
      for (Date d = obs.period_start; d <= obs.period_end; d = d + 1) {
        if (per_site.count(d)) continue;
        try {
          per_site.emplace(d, interp::idw(site.location, series, d, power));
        } catch (const InputError& e) {
          throw InputError("site " + site.site_id + ": " + e.what());
        }
      }
    }
  }
  return out;
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError(std::string("stage ") + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string("stage ") + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw NumericError(std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

int run_pipeline(const RunConfig& config) {
  if (config.model != "linear" && config.model != "longitudinal" &&
      config.model != "spatial")
    throw InputError("stage config: unknown model '" + config.model + "'");
  if (config.predict_mode != "marginal" && config.predict_mode != "conditional")
    throw InputError("stage config: unknown predict_mode '" +
                     config.predict_mode + "'");
  if (config.predict_mode == "conditional" && config.model == "linear")
    throw InputError(
        "stage config: conditional prediction needs a random-intercept model");
  const traffic::RingSpec rings =
      stage("config", [&] { return parse_rings(config.rings); });
  fs::create_directories(config.out_dir);
  const ingest::Meta meta = artifact_meta(config);
  const fs::path out(config.out_dir);

  // load
  std::vector<MonitorStation> monitors;
  std::vector<Site> all_sites;
  std::vector<RoadSegment> roads;
  std::vector<Site> learning, prediction;
  stage("load", [&] {
    monitors = ingest::load_monitors(config.monitors);
    all_sites = ingest::load_sites(config.sites);
    roads = ingest::load_roads(config.roads);
    std::set<std::string> validation;
    if (!config.split_file.empty()) {
      auto ids = load_split(config.split_file);
      std::set<std::string> known;
      for (const auto& s : all_sites) known.insert(s.site_id);
      for (const auto& id : ids) {
        if (!known.count(id))
          throw InputError("validation site " + id + " not present in " +
                           config.sites);
        validation.insert(id);
      }
    }
    for (const auto& s : all_sites) {
      if (validation.count(s.site_id)) prediction.push_back(s);
      else learning.push_back(s);
    }
    if (prediction.empty()) prediction = learning;  // in-sample validation
    return 0;
  });

  // exposure
  std::vector<traffic::ExposureVector> exposures;
  stage("exposure", [&] {
    exposures = traffic::exposure_matrix(all_sites, roads, rings,
                                         config.target_len,
                                         config.exposure_scale);
    write_exposure((out / "exposure.csv").string(), exposures, meta);
    write_exposure_sidecar((out / "exposure_meta.json").string(), rings,
                           config.target_len, config.exposure_scale, config);
    return 0;
  });

  // interpolate
  DailyIdw daily;
  std::vector<interp::PeriodCovariate> covariates;
  stage("interpolate", [&] {
    std::vector<interp::DailySeries> series;
    for (const auto& st : monitors)
      series.push_back(interp::daily_average(st, config.min_hours));
    daily = compute_daily_idw(all_sites, series, config.idw_power);
    write_daily_idw((out / "daily_idw.csv").string(), daily, meta);
    for (const auto& site : all_sites)
      for (const auto& obs : site.observations)
        covariates.push_back(
            interp::period_covariate(site, obs, series, config.idw_power));
    write_period_covariates((out / "period_covariates.csv").string(),
                            covariates, meta);
    return 0;
  });

  // fit
  predict::TrainedModel model;
  std::map<std::string, double> intercept_estimates;
  stage("fit", [&] {
    fit::GroupedDesign design =
        fit::build_design(learning, covariates, exposures,
                          config.include_traffic);
    if (config.model == "linear") {
      fit::LinearFit lf = fit::fit_linear(design);
      write_fit_linear(config.out_dir, lf, design, config);
      model = predict::TrainedModel::from_linear(lf);
    } else if (config.model == "longitudinal") {
      fit::MixedOptions opts;
      opts.reml = config.reml;
      fit::MixedFit mf = fit::fit_longitudinal(design, opts);
      write_fit_longitudinal(config.out_dir, mf, design, config);
      model = predict::TrainedModel::from_longitudinal(mf);
      intercept_estimates = mf.blups;
    } else {
      spatial::McmcConfig mc;
      mc.chains = config.chains;
      mc.iterations = config.iters;
      mc.burnin = config.burnin;
      mc.thin = config.thin;
      mc.seed = config.seed;
      spatial::SpatialPosterior posterior = spatial::fit_spatial(design, mc);
      write_fit_spatial(config.out_dir, posterior, design, config);
      model = predict::TrainedModel::from_spatial(posterior);
      intercept_estimates = model.b0_means();
    }
    return 0;
  });

  // predict
  std::vector<predict::PeriodPrediction> period_preds;
  stage("predict", [&] {
    const predict::Mode mode = config.predict_mode == "conditional"
                                   ? predict::Mode::conditional
                                   : predict::Mode::marginal;
    std::vector<predict::PredictionRecord> daily_records;
    period_preds = predict::predict_periods(model, prediction, daily,
                                            exposures, mode, &daily_records);
    write_daily_predictions((out / "daily_predictions.csv").string(),
                            daily_records, meta);
    write_period_predictions((out / "period_predictions.csv").string(),
                             period_preds, meta);
    return 0;
  });

  // validate
  stage("validate", [&] {
    validate::ValidationReport report =
        validate::calibration(prediction, period_preds);
    write_validation((out / "validation.json").string(), report, config);
    if (!intercept_estimates.empty()) {
      std::vector<std::string> ids;
      std::vector<Point> locations;
      for (const auto& s : learning) {
        ids.push_back(s.site_id);
        locations.push_back(s.location);
      }
      validate::Semivariogram sv =
          validate::semivariogram(ids, locations, intercept_estimates);
      write_semivariogram((out / "semivariogram.csv").string(), sv, meta);
    }
    return 0;
  });

  return 0;
}

}  // namespace pipeline
}  // namespace no2
