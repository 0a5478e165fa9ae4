namespace resolvent {
}  // namespace resolvent
