#ifndef DYNSIR_CLI_HPP
#define DYNSIR_CLI_HPP

namespace dynsir {

/// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
/// 3 conditioning failure.
int cli_main(int argc, char** argv);

} // namespace dynsir

#endif
