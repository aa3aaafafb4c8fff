// ioncavity-sim: run one simulation protocol from a config file and write CSV + manifest.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ioncavity/ioncavity.hpp"

namespace fs = std::filesystem;
using namespace ioncavity;

namespace {

const std::vector<std::string> kProtocols = {"emission-scan", "raman-dispersion", "fit-g0",
                                             "transmission-scan", "linewidth-fit", "dressed-states",
                                             "error-budget", "doppler-correction", "estimate-drive"};

struct Outputs {
  fs::path dir;
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    f << text;
    files.push_back(name);
  }
};

/// Protocol-specific keys, read from the same config file as the physical parameters.
struct ProtocolKeys {
  std::vector<double> delta_c_range;  // min, max (MHz); empty = centred on delta_p
  double delta_866_min = -25.0, delta_866_max = 25.0;
  std::size_t scan_points = 0;  // 0 = protocol default
  std::vector<double> delta_p_list = {-20, -15, -10, -5, 0, 5, 10, 15, 20};
  double half_span = 25.0;
  std::string measured_curve;
  double synthetic_g0 = 0.0;
  double fit_lo = 5.0, fit_hi = 25.0;
  double fitted_g0 = 0.0;
  std::string param_errors = "omega_397_mhz:0.4,b_gauss:0.1,kappa_mhz:0.1";
  bool linearity_check = true;
  bool no_ion = false;
  std::string scan_csv;
  double sideband_offset = 45.0, sideband_power = 0.3;
  double g1 = 0.0, g2 = 0.0;
  double g0_ideal = 17.3, delta_z_nm = 94.0, wavelength_nm = 866.0;
  double peak_ratio = 0.0;
  double drive_min = 0.005, drive_max = 0.1;
  std::size_t drive_points = 20;

  std::vector<std::string> read(KeyValueConfig& kv) {
    detail::Reader r(kv);
    r.number_list("delta_c_range_mhz", delta_c_range);
    r.number("delta_866_min_mhz", delta_866_min);
    r.number("delta_866_max_mhz", delta_866_max);
    r.count("scan_points", scan_points);
    r.number_list("delta_p_list_mhz", delta_p_list);
    r.number("dispersion_half_span_mhz", half_span);
    r.text("measured_curve", measured_curve);
    r.number("synthetic_g0_mhz", synthetic_g0);
    r.number("fit_lo_mhz", fit_lo);
    r.number("fit_hi_mhz", fit_hi);
    r.number("fitted_g0_mhz", fitted_g0);
    r.text("param_errors", param_errors);
    r.boolean("linearity_check", linearity_check);
    r.boolean("no_ion", no_ion);
    r.text("scan_csv", scan_csv);
    r.number("sideband_offset_mhz", sideband_offset);
    r.number("sideband_power", sideband_power);
    r.number("g1_mhz", g1);
    r.number("g2_mhz", g2);
    r.number("g0_ideal_mhz", g0_ideal);
    r.number("delta_z_nm", delta_z_nm);
    r.number("wavelength_nm", wavelength_nm);
    r.number("peak_ratio", peak_ratio);
    r.number("drive_e_min_mhz", drive_min);
    r.number("drive_e_max_mhz", drive_max);
    r.count("drive_points", drive_points);
    if (!delta_c_range.empty() && (delta_c_range.size() != 2 || !(delta_c_range[0] < delta_c_range[1])))
      r.errors.push_back("delta_c_range_mhz: expected 'min, max' with min < max");
    if (!(delta_866_min < delta_866_max)) r.errors.push_back("delta_866_min_mhz must be < delta_866_max_mhz");
    if (!(half_span > 0.0)) r.errors.push_back("dispersion_half_span_mhz must be > 0");
    return r.errors;
  }
};

/// "key:value,key:value" -> ordered pairs.
std::vector<std::pair<std::string, double>> parse_param_errors(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("param_errors: expected 'key:error' in '" + item + "'");
    auto key = item.substr(0, colon);
    key.erase(0, key.find_first_not_of(' '));
    key.erase(key.find_last_not_of(' ') + 1);
    const auto v = parse_double(item.substr(colon + 1));
    if (!v) throw ConfigError("param_errors: bad number in '" + item + "'");
    out.emplace_back(key, *v);
  }
  return out;
}

std::vector<MeasuredShift> load_measured(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open measured curve '" + path + "'");
  std::vector<MeasuredShift> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("delta_p", 0) == 0) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) fields.push_back(item);
    if (fields.size() < 2) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected delta_p_mhz,delta_mhz[,delta_error_mhz]");
    auto dp = parse_double(fields[0]);
    auto d = parse_double(fields[1]);
    std::optional<double> e = fields.size() > 2 && !fields[2].empty() ? parse_double(fields[2]) : std::optional<double>(0.0);
    if (!dp || !d || !e) throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
    out.push_back({*dp, *d, *e});
  }
  return out;
}

std::string dispersion_csv(const DispersionCurve& c) {
  std::string out = "delta_p_mhz,delta_mhz,delta_error_mhz,ok\n";
  for (const auto& p : c.points)
    out += format_double(p.delta_p_mhz) + "," + format_double(p.delta_mhz) + "," + format_double(p.delta_error_mhz) + "," +
           (p.ok ? "true" : "false") + "\n";
  return out;
}

std::string lorentzian_csv(const LorentzianFit& f) {
  return "parameter,value,standard_error\ncenter_mhz," + format_double(f.center) + "," + format_double(f.center_error) +
         "\nhwhm_mhz," + format_double(f.hwhm) + "," + format_double(f.hwhm_error) + "\namplitude," +
         format_double(f.amplitude) + "," + format_double(f.amplitude_error) + "\noffset," + format_double(f.offset) + "," +
         format_double(f.offset_error) + "\n";
}

std::string fit_result_csv(const FitResult& r) {
  return "parameter,value,standard_error,chi2,chi2_per_dof,evaluations\n" + r.parameter + "," + format_double(r.estimate) + "," +
         format_double(r.standard_error) + "," + format_double(r.chi2) + "," + format_double(r.chi2_per_dof) + "," +
         std::to_string(r.evaluations) + "\n";
}

struct RunContext {
  SystemConfig cfg;
  ProtocolKeys keys;
  std::size_t threads = 1;
  Outputs out;
};

std::vector<MeasuredShift> measured_or_synthetic(RunContext& ctx, const DispersionOptions& dopt) {
  if (!ctx.keys.measured_curve.empty()) return load_measured(ctx.keys.measured_curve);
  if (!(ctx.keys.synthetic_g0 > 0.0)) throw ConfigError("set measured_curve or synthetic_g0_mhz");
  SystemConfig c = ctx.cfg;
  c.g0 = Frequency::mhz(ctx.keys.synthetic_g0);
  const auto curve = raman_dispersion_curve(c, ctx.keys.delta_p_list, dopt);
  ctx.out.write("synthetic-curve.csv", dispersion_csv(curve));
  return to_measured(curve);
}

void run_protocol(const std::string& protocol, RunContext& ctx) {
  auto& cfg = ctx.cfg;
  auto& k = ctx.keys;
  ScanOptions sopt;
  sopt.threads = ctx.threads;
  DispersionOptions dopt;
  dopt.scan = sopt;
  dopt.half_span_mhz = k.half_span;
  if (k.scan_points) dopt.points = k.scan_points;

  if (protocol == "emission-scan") {
    const double dp = cfg.delta_p.in_mhz();
    const double lo = k.delta_c_range.empty() ? dp - 25.0 : k.delta_c_range[0];
    const double hi = k.delta_c_range.empty() ? dp + 25.0 : k.delta_c_range[1];
    const auto scan = emission_scan(cfg, cfg.delta_p, linspace(lo, hi, k.scan_points ? k.scan_points : 81), sopt);
    ctx.out.write("emission-scan.csv", scan.to_csv());
    const auto shift = extract_raman_shift(scan, cfg.delta_p);
    ctx.out.write("fit.csv", lorentzian_csv(shift.fit) + "delta_mhz," + format_double(shift.delta_mhz) + "," +
                                 format_double(shift.error_mhz) + "\n");
    std::cout << "Raman shift delta = " << shift.delta_mhz << " +- " << shift.error_mhz << " MHz"
              << (shift.peak_at_edge ? " (warning: peak at grid edge)" : "") << "\n";
  } else if (protocol == "raman-dispersion") {
    const auto curve = raman_dispersion_curve(cfg, k.delta_p_list, dopt);
    ctx.out.write("raman-dispersion.csv", dispersion_csv(curve));
    for (const auto& p : curve.points)
      if (!p.ok) std::cerr << "warning: delta_p = " << p.delta_p_mhz << " MHz failed: " << p.message << "\n";
  } else if (protocol == "fit-g0") {
    const auto measured = measured_or_synthetic(ctx, dopt);
    FitG0Options fo;
    fo.lo_mhz = k.fit_lo;
    fo.hi_mhz = k.fit_hi;
    fo.dispersion = dopt;
    const auto r = fit_g0(measured, cfg, fo);
    std::string res = "delta_p_mhz,delta_mhz,residual_mhz\n";
    for (std::size_t i = 0; i < measured.size(); ++i)
      res += format_double(measured[i].delta_p_mhz) + "," + format_double(measured[i].delta_mhz) + "," +
             format_double(r.residuals[i]) + "\n";
    ctx.out.write("fit-g0.csv", res);
    ctx.out.write("fit.csv", fit_result_csv(r));
    std::cout << "g0 = " << r.estimate << " +- " << r.standard_error << " MHz (chi2/dof " << r.chi2_per_dof << ")\n";
  } else if (protocol == "transmission-scan") {
    TransmissionOptions topt{ctx.threads, k.no_ion};
    const auto scan = transmission_scan(cfg, linspace(k.delta_866_min, k.delta_866_max, k.scan_points ? k.scan_points : 101), topt);
    ctx.out.write("transmission-scan.csv", scan.to_csv());
    if (k.no_ion) {
      const auto f = fit_lorentzian(scan.detunings(), scan.signals());
      ctx.out.write("fit.csv", lorentzian_csv(f));
      std::cout << "empty-cavity HWHM = " << f.hwhm << " MHz\n";
    }
  } else if (protocol == "linewidth-fit") {
    SpectrumScan scan = k.scan_csv.empty()
                            ? sideband_transmission_scan(cfg, linspace(-70.0, 70.0, k.scan_points ? k.scan_points : 561),
                                                         k.sideband_offset, k.sideband_power)
                            : SpectrumScan::load(k.scan_csv);
    ctx.out.write("linewidth-fit.csv", scan.to_csv());
    const auto r = linewidth_fit(scan, k.sideband_offset);
    ctx.out.write("fit.csv", "parameter,value,standard_error\nkappa_mhz," + format_double(r.kappa_mhz) + "," +
                                 format_double(r.error_mhz) + "\naxis_scale," + format_double(r.axis_scale) + ",\n");
    std::cout << "kappa = " << r.kappa_mhz << " +- " << r.error_mhz << " MHz\n";
  } else if (protocol == "dressed-states") {
    double g1 = k.g1, g2 = k.g2;
    if (g1 == 0.0 && g2 == 0.0) {
      const auto [a, b] = raman_couplings(cfg.g0);
      g1 = a.in_mhz();
      g2 = b.in_mhz();
    }
    const auto d = dressed_states(g1, g2);
    std::string csv = "state,eigenvalue_mhz,amp_a_1_0,amp_b_0_1,amp_c_0_0\n";
    const char* names[] = {"u_minus", "u_dark", "u_plus"};
    for (int i = 0; i < 3; ++i)
      csv += std::string(names[i]) + "," + format_double(d.eigenvalues[static_cast<std::size_t>(i)]) + "," +
             format_double(d.eigenvectors(0, i)) + "," + format_double(d.eigenvectors(1, i)) + "," +
             format_double(d.eigenvectors(2, i)) + "\n";
    ctx.out.write("dressed-states.csv", csv);
    std::cout << "lambda = " << d.lambda << " MHz\n";
  } else if (protocol == "error-budget") {
    const auto measured = measured_or_synthetic(ctx, dopt);
    double g0 = k.fitted_g0;
    if (!(g0 > 0.0)) {
      FitG0Options fo;
      fo.lo_mhz = k.fit_lo;
      fo.hi_mhz = k.fit_hi;
      fo.dispersion = dopt;
      g0 = fit_g0(measured, cfg, fo).estimate;
    }
    ErrorBudgetOptions eo;
    eo.fit.dispersion = dopt;
    eo.linearity_check = k.linearity_check;
    const auto b = error_budget(measured, cfg, g0, parse_param_errors(k.param_errors), eo);
    ctx.out.write("error-budget.csv", b.to_csv());
    ctx.out.write("error-budget.txt", b.to_table());
    std::cout << b.to_table();
  } else if (protocol == "doppler-correction") {
    const auto g = doppler_corrected_g0(Frequency::mhz(k.g0_ideal), k.delta_z_nm, k.wavelength_nm);
    ctx.out.write("doppler-correction.csv", "g0_ideal_mhz,delta_z_nm,wavelength_nm,g0_mhz\n" + format_double(k.g0_ideal) + "," +
                                                format_double(k.delta_z_nm) + "," + format_double(k.wavelength_nm) + "," +
                                                format_double(g.in_mhz()) + "\n");
    std::cout << "g0 = " << g.in_mhz() << " MHz\n";
  } else if (protocol == "estimate-drive") {
    DriveCalibrationOptions o;
    o.e_min_mhz = k.drive_min;
    o.e_max_mhz = k.drive_max;
    o.e_points = k.drive_points;
    o.threads = ctx.threads;
    const auto curve = drive_ratio_curve(cfg, o);
    std::string csv = "drive_e_mhz,peak_ratio\n";
    for (std::size_t i = 0; i < curve.e_mhz.size(); ++i)
      csv += format_double(curve.e_mhz[i]) + "," + format_double(curve.ratio[i]) + "\n";
    ctx.out.write("estimate-drive.csv", csv);
    if (!(k.peak_ratio > 0.0)) throw ConfigError("estimate-drive needs peak_ratio in (0, 1]");
    const auto e = estimate_drive_amplitude(k.peak_ratio, curve);
    ctx.out.write("fit.csv", "parameter,value\ndrive_e_mhz," + format_double(e.e_mhz) + "\n");
    std::cout << "E = " << e.e_mhz << " MHz\n";
  } else {
    throw ConfigError("unknown protocol '" + protocol + "'");
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ion-cavity master-equation simulator"};
  std::string protocol, config_path, out_dir;
  std::vector<std::string> overrides;
  std::size_t threads = hardware_threads();
  bool validate_only = false;
  app.add_option("protocol", protocol, "Protocol to run")->required()->check(CLI::IsMember(kProtocols));
  app.add_option("--config", config_path, "Config file (key = value)")->required();
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", overrides, "Override a config key, key=value");
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_flag("--validate-only", validate_only, "Check the config and exit without writing files");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorClass::config);
  }

  const auto started = std::chrono::steady_clock::now();
  try {
    auto kv = KeyValueConfig::load(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      kv.set(o.substr(0, eq), o.substr(eq + 1));
    }
    const auto raw = kv.values();
    RunContext ctx;
    auto errors = read_system_config(kv, ctx.cfg);
    auto more = ctx.keys.read(kv);
    errors.insert(errors.end(), more.begin(), more.end());
    for (const auto& key : kv.unused_keys()) errors.push_back("unknown key '" + key + "'");
    auto v = ctx.cfg.violations();
    errors.insert(errors.end(), v.begin(), v.end());
    if (!errors.empty()) throw ConfigError(errors);
    if (validate_only) {
      std::cout << "config OK\n";
      return 0;
    }
    if (out_dir.empty()) throw ConfigError("--out is required unless --validate-only is given");

    // Everything that affects results: protocol, physical parameters, protocol keys.
    std::string canonical = "protocol = " + protocol + "\n" + to_config_text(ctx.cfg);
    for (const auto& [key, value] : raw)
      if (canonical.find("\n" + key + " = ") == std::string::npos) canonical += key + " = " + value + "\n";
    const std::string hash = hex64(fnv1a(canonical));

    fs::create_directories(out_dir);
    ctx.threads = threads;
    ctx.out.dir = out_dir;
    run_protocol(protocol, ctx);

    nlohmann::ordered_json m;
    m["protocol"] = protocol;
    m["tool"] = "ioncavity-sim";
    m["tool_version"] = version;
    m["config_hash"] = hash;
    m["config_path"] = config_path;
    nlohmann::ordered_json c;
    for (const auto& [key, value] : system_config_entries(ctx.cfg)) c[key] = value;
    for (const auto& [key, value] : raw)
      if (!c.contains(key)) c[key] = value;
    m["config"] = c;
    m["threads"] = threads;
    m["started_utc"] = utc_now();
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    m["outputs"] = ctx.out.files;
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << m.dump(2) << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.error_class()) << "]: " << e.what() << "\n";
    if (const auto* s = dynamic_cast<const ScanPointError*>(&e)) std::cerr << "failing scan point: " << s->detuning_mhz() << " MHz\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error [internal_error]: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::internal);
  }
}
