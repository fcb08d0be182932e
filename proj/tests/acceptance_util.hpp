#pragma once

#include <catch2/catch_amalgamated.hpp>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct Check {
  std::string name;
  bool ok;
};

// runs a criterion body, prints exactly one PASS/FAIL line, then asserts
inline void run_criterion(int number, const std::string& title,
                          const std::function<void(std::vector<Check>&)>& body) {
  std::vector<Check> checks;
  bool threw = false;
  std::string what;
  auto start = std::chrono::steady_clock::now();
  try {
    body(checks);
  } catch (const std::exception& e) {
    threw = true;
    what = e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = !threw && !checks.empty();
  for (const auto& c : checks) ok = ok && c.ok;
  std::printf("[ACCEPT] criterion %d (%s): %s (%.2f s)\n", number, title.c_str(),
              ok ? "PASS" : "FAIL", secs);
  if (threw) std::printf("         exception: %s\n", what.c_str());
  for (const auto& c : checks)
    if (!c.ok) std::printf("         failed: %s\n", c.name.c_str());
  std::fflush(stdout);
  INFO("criterion " << number << " (" << title << ")");
  REQUIRE(ok);
}

}  // namespace acceptance
