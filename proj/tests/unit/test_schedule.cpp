#include <gtest/gtest.h>

#include "pixelflow/rng.hpp"
#include "pixelflow/schedule.hpp"

using namespace pixelflow;

TEST(Schedule, FourStageLadder) {
  const auto s = build_schedule(4, 256, 4);
  ASSERT_EQ(s.stages(), 4u);
  const std::size_t res[] = {256, 128, 64, 32};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.resolution(i), res[i]);
  EXPECT_EQ(s.t_start(3), 0.0);
  EXPECT_EQ(s.t_end(3), 0.25);
  EXPECT_EQ(s.t_start(2), 0.25);
  EXPECT_EQ(s.t_end(2), 0.5);
  EXPECT_EQ(s.t_start(1), 0.5);
  EXPECT_EQ(s.t_end(1), 0.75);
  EXPECT_EQ(s.t_start(0), 0.75);
  EXPECT_EQ(s.t_end(0), 1.0);
}

TEST(Schedule, SingleStage) {
  const auto s = build_schedule(1, 64, 2);
  EXPECT_EQ(s.stages(), 1u);
  EXPECT_EQ(s.resolution(0), 64u);
  EXPECT_EQ(s.t_start(0), 0.0);
  EXPECT_EQ(s.t_end(0), 1.0);
}

TEST(Schedule, DeskDefaultKickoff) {
  const auto s = build_schedule(2, 32, 2);
  EXPECT_EQ(s.resolution(0), 32u);
  EXPECT_EQ(s.resolution(1), 16u);
  EXPECT_EQ(s.kickoff_grid(), 8u);
}

TEST(Schedule, StageResolution) {
  EXPECT_EQ(build_schedule(4, 256, 4).resolution(3), 32u);
  EXPECT_EQ(build_schedule(2, 64, 2).resolution(1), 32u);
  EXPECT_THROW(build_schedule(2, 64, 2).resolution(2), std::out_of_range);
}

TEST(Schedule, RejectsBadLadders) {
  EXPECT_THROW(build_schedule(0, 32, 2), std::invalid_argument);
  EXPECT_THROW(build_schedule(3, 36, 2), std::invalid_argument);  // 36 not divisible by 4*2
  EXPECT_THROW(build_schedule(5, 32, 2), std::invalid_argument);  // kickoff grid 1x1
  EXPECT_NO_THROW(build_schedule(4, 32, 2));                      // kickoff grid 2x2
  EXPECT_THROW(build_schedule(2, 8, 4), std::invalid_argument);   // kickoff grid 1x1
}

TEST(Schedule, CustomBoundaries) {
  const auto s = StageSchedule::with_boundaries({0.0, 0.4, 1.0}, 32, 2);
  EXPECT_EQ(s.t_start(1), 0.0);
  EXPECT_EQ(s.t_end(1), 0.4);
  EXPECT_EQ(s.t_start(0), 0.4);
  EXPECT_THROW(StageSchedule::with_boundaries({0.0, 0.5, 0.5, 1.0}, 32, 2), std::invalid_argument);
  EXPECT_THROW(StageSchedule::with_boundaries({0.1, 1.0}, 32, 2), std::invalid_argument);
}

TEST(Locate, Boundaries) {
  const auto s = build_schedule(4, 256, 4);
  auto p = s.locate(0.0);
  EXPECT_EQ(p.stage, 3u);
  EXPECT_EQ(p.tau, 0.0);
  p = s.locate(1.0);
  EXPECT_EQ(p.stage, 0u);
  EXPECT_EQ(p.tau, 1.0);
  p = s.locate(0.5);
  EXPECT_EQ(p.stage, 1u);
  EXPECT_EQ(p.tau, 0.0);
}

TEST(Locate, Interior) {
  const auto p = build_schedule(4, 256, 4).locate(0.30);
  EXPECT_EQ(p.stage, 2u);
  EXPECT_NEAR(p.tau, (0.30 - 0.25) / 0.25, 1e-15);
}

TEST(Locate, OutOfRange) {
  const auto s = build_schedule(2, 32, 2);
  EXPECT_THROW(s.locate(-1e-9), std::out_of_range);
  EXPECT_THROW(s.locate(1.0 + 1e-9), std::out_of_range);
}

TEST(Locate, RoundTripAndTiling) {
  Rng rng(21);
  for (std::size_t S : {1u, 2u, 3u, 4u}) {
    const auto s = build_schedule(S, 64, 2);
    double total = 0;
    for (std::size_t i = 0; i < S; ++i) total += s.t_end(i) - s.t_start(i);
    EXPECT_EQ(total, 1.0);
    for (std::size_t i = 0; i + 1 < S; ++i) EXPECT_EQ(s.t_end(i + 1), s.t_start(i));
    for (int k = 0; k < 2000; ++k) {
      const double t = rng.uniform();
      const auto p = s.locate(t);
      EXPECT_NEAR(s.t_start(p.stage) + p.tau * (s.t_end(p.stage) - s.t_start(p.stage)), t, 1e-15);
      EXPECT_NEAR(s.global_time(p.stage, p.tau), t, 1e-15);
      EXPECT_GE(p.tau, 0.0);
      EXPECT_LE(p.tau, 1.0);
    }
  }
}

TEST(Locate, MonotoneInDenoisingOrder) {
  const auto s = build_schedule(4, 64, 2);
  auto prev = s.locate(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const auto cur = s.locate(i / 1000.0);
    const bool later = cur.stage < prev.stage || (cur.stage == prev.stage && cur.tau >= prev.tau);
    EXPECT_TRUE(later) << "t=" << i / 1000.0;
    prev = cur;
  }
}
