#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "qhm/field.hpp"
#include "qhm/parallel.hpp"

using namespace qhm::cli;

namespace {

void field_input(CLI::App* c, Options& o) {
  c->add_option("--input", o.input, "field stem or header (<stem>.json)");
  c->add_option("--K", o.K, "dyadic cutoff parameter")->capture_default_str();
}

void symbol_input(CLI::App* c, Options& o) {
  c->add_option("--symbol", o.symbol, "symbol JSON")->required();
  c->add_option("--grid", o.grid, "grid size per axis for x-independent symbols")
      ->capture_default_str();
  c->add_option("--weight", o.weight, "weight vector")->delimiter(',')->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-homogeneous microlocal toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  Options o;
  app.add_option("--threads", g.threads, "worker cap (0: all cores)");
  app.add_option("--seed", g.seed, "seed for randomized batteries")->capture_default_str();
  app.add_flag("--no-timestamp", g.no_timestamp, "omit the timestamp from reports");
  app.add_flag("!--no-verdict-exit", g.verdict_exit, "exit 0 even when a verdict fails");
  app.add_option("--report", g.report, "report path (default: stdout)");

  auto* dec = app.add_subcommand("decompose", "dyadic blocks of a field");
  field_input(dec, o);
  dec->add_option("--out-dir", o.out_dir, "directory for block files")->required();

  auto* bi = app.add_subcommand("besov-index", "global Besov index estimate");
  field_input(bi, o);
  bi->add_option("--fit-lo", o.fit_lo)->capture_default_str();
  bi->add_option("--fit-hi", o.fit_hi, "-1: h_max - 1")->capture_default_str();
  bi->add_option("--expect", o.expect, "expected index (sets a verdict)");
  bi->add_option("--expect-tol", o.expect_tol)->capture_default_str();

  auto* ap = app.add_subcommand("apply", "quantize a symbol on a field");
  symbol_input(ap, o);
  field_input(ap, o);
  ap->add_option("--output", o.output, "output field stem");

  auto* sp = app.add_subcommand("split", "smooth/natural split of a rough symbol");
  symbol_input(sp, o);
  field_input(sp, o);
  sp->add_option("--delta", o.delta)->capture_default_str();
  sp->add_option("--sector", o.sector, "direction,radius,eps0")->delimiter(',');
  sp->add_option("--region", o.region, "center,radius")->delimiter(',');
  sp->add_option("--rho0", o.rho0)->capture_default_str();

  auto* el = app.add_subcommand("elliptic-check", "microlocal ellipticity bound");
  symbol_input(el, o);
  el->add_option("--sector", o.sector, "direction,radius,eps0")->delimiter(',');
  el->add_option("--region", o.region, "center,radius")->delimiter(',');
  el->add_option("--window", o.region, "alias of --region")->delimiter(',');
  el->add_option("--rho0", o.rho0)->capture_default_str();
  el->add_option("--threshold", o.threshold)->capture_default_str();
  el->add_option("--char-directions", o.char_count, "scan this many directions at --x0");
  el->add_option("--x0", o.x0, "point for the direction scan")->delimiter(',');

  auto* wf = app.add_subcommand("wavefront", "anisotropic wavefront scan");
  field_input(wf, o);
  wf->add_option("--s", o.s, "regularity threshold (default 0.5)");
  wf->add_option("--directions", o.directions)->capture_default_str();
  wf->add_option("--stride", o.stride)->capture_default_str();
  wf->add_option("--lift", o.lift)->capture_default_str();
  wf->add_option("--csv", o.csv, "map output (default: report path with .csv)");

  auto* pc = app.add_subcommand("parametrix-check", "residual order of a microlocal parametrix");
  symbol_input(pc, o);
  pc->add_option("--sector", o.sector, "direction,radius,eps0 (default 1,0,0.5,4)")
      ->delimiter(',');
  pc->add_option("--window", o.window, "center,kappa")->delimiter(',');
  pc->add_option("--order", o.order, "Neumann order J")->capture_default_str();
  pc->add_option("--rho0", o.rho0)->capture_default_str();
  pc->add_option("--battery", o.battery, "battery size")->capture_default_str();
  pc->add_option("--K", o.K)->capture_default_str();

  auto* nl = app.add_subcommand("nonlinear-demo", "microlocal regularity of a manufactured case");
  nl->add_option("--case", o.case_id, "built-in case id");
  nl->add_option("--manifest", o.manifest, "case manifest JSON");
  nl->add_option("--grid", o.grid)->capture_default_str();
  nl->add_option("--delta", o.delta)->capture_default_str();
  nl->add_option("--s", o.s, "quasi-linear target index (default: the case's)");
  nl->add_option("--tolerance", o.tolerance)->capture_default_str();
  nl->add_option("--save-case", o.save_case, "write the case manifest and fields");
  nl->add_option("--K", o.K)->capture_default_str();

  auto* st = app.add_subcommand("selftest", "invariant suite on small grids");
  st->add_option("--K", o.K)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  qhm::set_threads(g.threads);
  try {
    if (*dec)
      return decompose(o, g);
    if (*bi)
      return besov_index(o, g);
    if (*ap)
      return apply(o, g);
    if (*sp)
      return split(o, g);
    if (*el)
      return elliptic_check(o, g);
    if (*wf)
      return wavefront(o, g);
    if (*pc)
      return parametrix_check(o, g);
    if (*nl)
      return nonlinear_demo(o, g);
    if (*st)
      return selftest(o, g);
  } catch (const UsageError& e) {
    std::cerr << "qhm: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "qhm: " << e.what() << "\n";
    return kUsage;
  } catch (const qhm::DataError& e) {
    std::cerr << "qhm: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "qhm: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "qhm: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
