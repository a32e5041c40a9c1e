#pragma once

#include <doctest.h>

#include <functional>
#include <string>

// Asserts that fn throws and that the message mentions every given fragment.
template <typename Fn>
void expect_throw_containing(Fn&& fn, std::initializer_list<std::string> fragments) {
  bool threw = false;
  try {
    fn();
  } catch (const std::exception& e) {
    threw = true;
    const std::string message = e.what();
    for (const auto& fragment : fragments) {
      INFO("message: ", message);
      CHECK(message.find(fragment) != std::string::npos);
    }
  }
  CHECK(threw);
}
