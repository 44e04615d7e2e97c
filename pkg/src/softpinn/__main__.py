if __name__ == "__main__":
    import softpinn.main

    softpinn.main.main()
