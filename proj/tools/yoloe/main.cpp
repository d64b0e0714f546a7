#include <iostream>

#include "commands.hpp"
#include "yoloe/error.hpp"
#include "yoloe/trainer.hpp"

int main(int argc, char** argv) {
  using namespace yoloe;
  using namespace yoloe::cli;

  CLI::App app{"Open-vocabulary detection and segmentation on synthetic scenes", "yoloe"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "yoloe 0.1.0");
  Action action;
  add_dataset_command(app, action);
  add_train_command(app, action);
  add_fold_command(app, action);
  add_infer_command(app, action);
  add_validate_command(app, action);
  add_bench_command(app, action);
  add_check_command(app, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LookupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
}
