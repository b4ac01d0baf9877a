"""Write the small synthetic MovieLens-format corpus used by the CLI tests.

Deterministic: rerunning reproduces the committed files byte for byte.
Users 1-5 favour comedies, users 6-10 favour dramas.
"""
import csv
import random

rng = random.Random(20240601)

genres = ["Comedy", "Drama", "Romance", "Thriller"]
movies = []
for m in range(1, 21):
    main = "Comedy" if m % 2 else "Drama"
    extra = genres[2 + m % 3] if m % 3 < 2 else None
    g = [main] + ([extra] if extra else [])
    title = f"Synthetic {main} {m} ({1990 + m})"
    if m == 7:
        title = 'Quoted, "Title" 7 (1997)'
    movies.append((m, title, "|".join(g)))

with open("movies.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["movieId", "title", "genres"])
    w.writerows(movies)

ratings = []
for u in range(1, 11):
    likes = "Comedy" if u <= 5 else "Drama"
    for m in sorted(rng.sample(range(1, 21), 10)):
        liked = movies[m - 1][2].startswith(likes)
        base = 4.5 if liked else 2.0
        r = min(5.0, max(0.5, base + rng.choice([-0.5, 0.0, 0.5])))
        ratings.append((u, m, r, 1000000000 + len(ratings)))

with open("ratings.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["userId", "movieId", "rating", "timestamp"])
    for u, m, r, t in ratings:
        w.writerow([u, m, f"{r:.1f}", t])

tags = ["funny", "slapstick", "tearjerker", "Funny ", "slow", "twist"]
with open("tags.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["userId", "movieId", "tag", "timestamp"])
    for i in range(30):
        m = rng.randrange(1, 21)
        pool = tags[:2] + [tags[3]] if m % 2 else tags[2:3] + tags[4:]
        w.writerow([rng.randrange(1, 11), m, rng.choice(pool), 1100000000 + i])
    w.writerow([3, 999, "orphan", 1100000099])
